use dan_tensor::Tensor;

use crate::error::{shape_mismatch, Result};

/// `1/(H*N) * sum_h sum_n (pred - target)^2`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(shape_mismatch("mse_loss", target.shape(), pred.shape()));
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_fit_is_zero() {
        let t = Tensor::from_fn(&[2, 3], |i| i as f64);
        assert_eq!(mse_loss(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn two_node_example() {
        let p = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        assert_eq!(mse_loss(&p, &Tensor::zeros(&[1, 2])).unwrap(), 2.5);
    }

    #[test]
    fn uniform_shift_adds_its_square() {
        let t = Tensor::from_fn(&[3, 4], |i| (i as f64).sin());
        let shifted = t.map(|v| v + 0.25);
        assert!((mse_loss(&shifted, &t).unwrap() - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(mse_loss(&Tensor::zeros(&[1, 2]), &Tensor::zeros(&[2, 1])).is_err());
    }
}
