use dan_tensor::{ParamId, ParamStore, Tape, Var};

use crate::error::{shape_mismatch, Result};
use crate::init::Initializer;

/// 1x1 convolution: an affine map over the last axis applied at every
/// leading index.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, init: &mut Initializer) -> Self {
        let weight = store.add(format!("{name}.weight"), init.uniform(&[input, output], input));
        let bias = store.add(format!("{name}.bias"), init.uniform(&[output], input));
        Self {
            weight,
            bias,
            in_features: input,
            out_features: output,
        }
    }

    pub fn forward(&self, store: &ParamStore, tape: &mut Tape, x: Var) -> Result<Var> {
        let shape = tape.shape(x).to_vec();
        let (&last, lead) = shape.split_last().expect("tensors have rank >= 1");
        if last != self.in_features {
            return Err(shape_mismatch("linear input", &[self.in_features], &[last]));
        }
        let rows: usize = lead.iter().product();
        let flat = tape.reshape(x, &[rows, last])?;
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let y = tape.matmul(flat, w)?;
        let y = tape.add_bias(y, b)?;
        let mut out_shape = lead.to_vec();
        out_shape.push(self.out_features);
        Ok(tape.reshape(y, &out_shape)?)
    }
}
