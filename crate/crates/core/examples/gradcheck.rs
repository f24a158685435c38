//! Gradient check of the full forecaster on a tiny network.
use dan_core::forecast::tiny_gradient_check;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for seed in 0..3 {
        let r = tiny_gradient_check(seed)?;
        println!("seed {seed}: {} coordinates, max relative error {:.2e}", r.coordinates_checked, r.max_relative_error);
    }
    Ok(())
}
