use dan_tensor::Tensor;

use crate::data::GraphSequence;

/// Repeats the last observed density for every step of the horizon.
pub fn persistence_baseline(seq: &GraphSequence, horizon: usize) -> Tensor {
    let last = seq.density(seq.len() - 1);
    let n = last.len();
    Tensor::from_fn(&[horizon, n], |i| last[i % n])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::mse_loss;

    fn ramp(t: usize, n: usize) -> GraphSequence {
        let signals = Tensor::from_fn(&[t, n, 1], |i| (i / n) as f64);
        GraphSequence::new(signals, Tensor::zeros(&[t, n, n]), 1, 0).unwrap()
    }

    #[test]
    fn linear_ramp_errors_grow_with_horizon() {
        let seq = ramp(5, 3);
        let pred = persistence_baseline(&seq, 2);
        assert_eq!(pred.shape(), &[2, 3]);
        // Truth continues the ramp: 5 then 6, last observed is 4.
        for h in 0..2 {
            for n in 0..3 {
                let err = (5.0 + h as f64) - pred.get(&[h, n]).unwrap();
                assert_eq!(err, 1.0 + h as f64);
            }
        }
    }

    #[test]
    fn constant_series_has_zero_error() {
        let signals = Tensor::full(&[4, 2, 1], 3.0);
        let seq = GraphSequence::new(signals, Tensor::zeros(&[4, 2, 2]), 1, 0).unwrap();
        let pred = persistence_baseline(&seq, 3);
        assert_eq!(mse_loss(&pred, &Tensor::full(&[3, 2], 3.0)).unwrap(), 0.0);
    }
}
