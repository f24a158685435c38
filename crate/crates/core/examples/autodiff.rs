//! Reverse-mode differentiation on the tape, checked against central differences.
use dan_tensor::{finite_difference_check, Activation, ParamStore, Tape, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::from_fn(&[3, 2], |i| 0.1 * i as f64 - 0.2));
    let x = Tensor::from_fn(&[4, 3], |i| (i as f64).sin());
    let y = Tensor::from_fn(&[4, 2], |i| (i % 3) as f64);

    let loss = |store: &ParamStore, tape: &mut Tape| {
        let xv = tape.constant(x.clone());
        let wv = tape.param(store, w);
        let h = tape.matmul(xv, wv)?;
        let h = tape.activate(h, Activation::Tanh);
        let target = tape.constant(y.clone());
        tape.mse(h, target)
    };

    let mut tape = Tape::new();
    let l = loss(&store, &mut tape)?;
    println!("loss {:.6}", tape.value(l).data()[0]);
    tape.backward(l, &mut store)?;
    println!("dL/dw {:?}", store.get(w).grad.data());

    let report = finite_difference_check(&mut store, 1e-5, loss)?;
    println!("{} coordinates, max relative error {:.2e}", report.coordinates_checked, report.max_relative_error);
    Ok(())
}
