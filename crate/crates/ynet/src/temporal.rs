//! Temporal layers: dilated causal convolution and the gated TCN built on it.

use dan_tensor::{Activation, Padding, ParamId, ParamStore, Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{shape_mismatch, Result};
use crate::init::Initializer;

/// `y(t) = sum_{s<K} g(s) * x(t - d*s)`, with `x` zero before time 0.
///
/// Output length equals input length; `y(t)` only reads `x(..=t)`.
pub fn dilated_causal_conv(x: &[f64], g: &[f64], dilation: usize) -> Vec<f64> {
    assert!(dilation >= 1, "dilation must be at least 1");
    (0..x.len())
        .map(|t| {
            g.iter()
                .enumerate()
                .filter_map(|(s, &gs)| t.checked_sub(dilation * s).map(|i| gs * x[i]))
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatedTcnConfig {
    pub kernel: usize,
    pub dilation: usize,
    pub padding: Padding,
    /// Activation `z` of the filter branch; the gate branch is always sigmoid.
    pub activation: Activation,
}

/// `H(x) = z(x * g1 + b) ⊙ sigmoid(x * g2 + c)` along the leading time axis.
///
/// Input is `(T, M, C_in)`; filters mix channels, shape `(K, C_in, C_out)`.
#[derive(Debug, Clone)]
pub struct GatedTcn {
    pub filter: ParamId,
    pub filter_bias: ParamId,
    pub gate: ParamId,
    pub gate_bias: ParamId,
    pub config: GatedTcnConfig,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl GatedTcn {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        config: GatedTcnConfig,
        init: &mut Initializer,
    ) -> Self {
        let fan_in = config.kernel * in_channels;
        let fshape = [config.kernel, in_channels, out_channels];
        let filter = store.add(format!("{name}.filter"), init.uniform(&fshape, fan_in));
        let filter_bias = store.add(format!("{name}.filter_bias"), init.uniform(&[out_channels], fan_in));
        let gate = store.add(format!("{name}.gate"), init.uniform(&fshape, fan_in));
        let gate_bias = store.add(format!("{name}.gate_bias"), init.uniform(&[out_channels], fan_in));
        Self {
            filter,
            filter_bias,
            gate,
            gate_bias,
            config,
            in_channels,
            out_channels,
        }
    }

    pub fn output_len(&self, t: usize) -> Option<usize> {
        self.config
            .padding
            .output_len(t, self.config.kernel, self.config.dilation)
    }

    pub fn forward(&self, store: &ParamStore, tape: &mut Tape, x: Var) -> Result<Var> {
        let shape = tape.shape(x).to_vec();
        if shape.len() != 3 || shape[2] != self.in_channels {
            return Err(shape_mismatch("gated tcn input", &[0, 0, self.in_channels], &shape));
        }
        let GatedTcnConfig {
            dilation,
            padding,
            activation,
            ..
        } = self.config;
        let g1 = tape.param(store, self.filter);
        let b = tape.param(store, self.filter_bias);
        let g2 = tape.param(store, self.gate);
        let c = tape.param(store, self.gate_bias);

        let filtered = tape.causal_conv(x, g1, dilation, padding)?;
        let filtered = tape.add_bias(filtered, b)?;
        let filtered = tape.activate(filtered, activation);
        let gated = tape.causal_conv(x, g2, dilation, padding)?;
        let gated = tape.add_bias(gated, c)?;
        let gated = tape.sigmoid(gated);
        Ok(tape.mul(filtered, gated)?)
    }

    /// Applies the layer to an adjacency stream `(T, N, N)`, convolving each
    /// `(i, j)` entry independently with the layer's scalar filters.
    pub fn forward_adjacency(&self, store: &ParamStore, tape: &mut Tape, a: Var) -> Result<Var> {
        let shape = tape.shape(a).to_vec();
        let &[t, n, m] = &shape[..] else {
            return Err(shape_mismatch("adjacency stream", &[0, 0, 0], &shape));
        };
        if n != m || self.in_channels != 1 || self.out_channels != 1 {
            return Err(shape_mismatch("adjacency stream", &[t, n, n], &shape));
        }
        let flat = tape.reshape(a, &[t, n * n, 1])?;
        let y = self.forward(store, tape, flat)?;
        let tout = tape.shape(y)[0];
        Ok(tape.reshape(y, &[tout, n, n])?)
    }

    /// Evaluates the layer outside of training.
    pub fn apply(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let v = tape.constant(x.clone());
        let y = self.forward(store, &mut tape, v)?;
        Ok(tape.value(y).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_filter_is_identity() {
        let x = [0.3, -1.0, 2.0, 5.5];
        assert_eq!(dilated_causal_conv(&x, &[1.0], 3), x.to_vec());
    }

    #[test]
    fn hand_evaluated_sums() {
        assert_eq!(dilated_causal_conv(&[1.0, 2.0, 3.0], &[1.0, 1.0], 1), vec![1.0, 3.0, 5.0]);
        assert_eq!(
            dilated_causal_conv(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0], 2),
            vec![1.0, 2.0, 4.0, 6.0]
        );
    }

    fn scalar_layer(store: &mut ParamStore, activation: Activation) -> GatedTcn {
        let cfg = GatedTcnConfig {
            kernel: 1,
            dilation: 1,
            padding: Padding::CausalLeft,
            activation,
        };
        GatedTcn::new(store, "tcn", 1, 1, cfg, &mut Initializer::new(0))
    }

    #[test]
    fn scalar_gated_unit() {
        let mut store = ParamStore::new();
        let layer = scalar_layer(&mut store, Activation::Tanh);
        store.set_value(layer.filter, Tensor::ones(&[1, 1, 1]));
        store.set_value(layer.gate, Tensor::ones(&[1, 1, 1]));
        store.set_value(layer.filter_bias, Tensor::zeros(&[1]));
        store.set_value(layer.gate_bias, Tensor::zeros(&[1]));
        let y = layer.apply(&store, &Tensor::ones(&[1, 1, 1])).unwrap();
        let expected = 1f64.tanh() * (1.0 / (1.0 + (-1f64).exp()));
        assert!((y.data()[0] - expected).abs() < 1e-15);
        assert!((y.data()[0] - 0.5568).abs() < 1e-4);
    }

    #[test]
    fn saturated_gates() {
        let mut store = ParamStore::new();
        let layer = scalar_layer(&mut store, Activation::Identity);
        store.set_value(layer.filter, Tensor::ones(&[1, 1, 1]));
        store.set_value(layer.filter_bias, Tensor::zeros(&[1]));
        store.set_value(layer.gate, Tensor::zeros(&[1, 1, 1]));
        let x = Tensor::from_fn(&[5, 2, 1], |i| i as f64 - 3.0);

        store.set_value(layer.gate_bias, Tensor::scalar(-30.0));
        let closed = layer.apply(&store, &x).unwrap();
        assert!(closed.data().iter().all(|v| v.abs() < 1e-12));

        store.set_value(layer.gate_bias, Tensor::scalar(30.0));
        let open = layer.apply(&store, &x).unwrap();
        assert!(open.max_abs_diff(&x).unwrap() < 1e-11);
    }
}
