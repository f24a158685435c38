//! Forward kernels and their adjoints for the non-trivial primitives.
//!
//! The tape in [`crate::tape`] calls into these; they are public so callers
//! can evaluate the same math outside a recorded graph.

use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Result, TensorError};
use crate::tensor::Tensor;

/// Pointwise nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    #[default]
    Tanh,
    Sigmoid,
    Relu,
    Softplus,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => x.max(0.0),
            Activation::Softplus => softplus(x),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => sigmoid(x),
        }
    }
}

/// How a temporal convolution treats the left edge of the sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Zero-pad on the left; output length equals input length.
    #[default]
    CausalLeft,
    /// No padding; output length shrinks by `dilation * (K - 1)`.
    Valid,
}

impl Padding {
    pub fn output_len(self, t: usize, k: usize, dilation: usize) -> Option<usize> {
        match self {
            Padding::CausalLeft => Some(t),
            Padding::Valid => t.checked_sub(dilation * (k - 1)).filter(|&n| n > 0),
        }
    }

    fn offset(self, k: usize, dilation: usize) -> usize {
        match self {
            Padding::CausalLeft => 0,
            Padding::Valid => dilation * (k - 1),
        }
    }
}

fn conv_dims(x: &Tensor, g: &Tensor, dilation: usize, pad: Padding) -> Result<[usize; 6]> {
    let (&[t, m, cin], &[k, gcin, cout]) = (x.shape(), g.shape()) else {
        return Err(mismatch("causal_conv", x.shape(), g.shape()));
    };
    if gcin != cin || dilation == 0 {
        return Err(mismatch("causal_conv", x.shape(), g.shape()));
    }
    let tout = pad.output_len(t, k, dilation).ok_or_else(|| TensorError::InvalidShape {
        shape: x.shape().to_vec(),
        reason: format!("valid convolution with K={k}, dilation={dilation} leaves no output"),
    })?;
    Ok([t, m, cin, k, cout, tout])
}

/// Dilated causal convolution along the leading (time) axis.
///
/// `x` has shape `(T, M, C_in)`, the filter `g` has shape `(K, C_in, C_out)`:
///
/// `y[t, m, o] = sum_s sum_i g[s, i, o] * x[t - d*s, m, i]`
///
/// with `x` taken as zero before time 0.
pub fn causal_conv(x: &Tensor, g: &Tensor, dilation: usize, pad: Padding) -> Result<Tensor> {
    let [t, m, cin, k, cout, tout] = conv_dims(x, g, dilation, pad)?;
    let off = pad.offset(k, dilation);
    let (xd, gd) = (x.data(), g.data());
    let mut out = vec![0.0; tout * m * cout];
    for to in 0..tout {
        let tt = to + off;
        for s in 0..k {
            let Some(src) = tt.checked_sub(dilation * s) else {
                break;
            };
            debug_assert!(src < t);
            for mi in 0..m {
                let xrow = &xd[(src * m + mi) * cin..(src * m + mi + 1) * cin];
                let dst = &mut out[(to * m + mi) * cout..(to * m + mi + 1) * cout];
                for (i, &xv) in xrow.iter().enumerate() {
                    let grow = &gd[(s * cin + i) * cout..(s * cin + i + 1) * cout];
                    for (d, &gv) in dst.iter_mut().zip(grow) {
                        *d += gv * xv;
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![tout, m, cout], out))
}

/// Adjoint of [`causal_conv`]: returns `(dL/dx, dL/dg)` given `dL/dy`.
pub fn causal_conv_backward(
    x: &Tensor,
    g: &Tensor,
    dilation: usize,
    pad: Padding,
    gy: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let [_, m, cin, k, cout, tout] = conv_dims(x, g, dilation, pad)?;
    let off = pad.offset(k, dilation);
    let (xd, gd, gyd) = (x.data(), g.data(), gy.data());
    let mut gx = vec![0.0; x.len()];
    let mut gg = vec![0.0; g.len()];
    for to in 0..tout {
        let tt = to + off;
        for s in 0..k {
            let Some(src) = tt.checked_sub(dilation * s) else {
                break;
            };
            for mi in 0..m {
                let gyrow = &gyd[(to * m + mi) * cout..(to * m + mi + 1) * cout];
                let xbase = (src * m + mi) * cin;
                for i in 0..cin {
                    let gbase = (s * cin + i) * cout;
                    let xv = xd[xbase + i];
                    let mut acc = 0.0;
                    for o in 0..cout {
                        acc += gd[gbase + o] * gyrow[o];
                        gg[gbase + o] += xv * gyrow[o];
                    }
                    gx[xbase + i] += acc;
                }
            }
        }
    }
    Ok((
        Tensor::from_parts(x.shape().to_vec(), gx),
        Tensor::from_parts(g.shape().to_vec(), gg),
    ))
}

fn inv_sqrt_degrees(a: &Tensor) -> Result<Vec<f64>> {
    let (n, m) = a.dims2("normalize_adjacency")?;
    if n != m {
        return Err(mismatch("normalize_adjacency", a.shape(), &[n, n]));
    }
    Ok(a.data()
        .chunks(n)
        .map(|row| {
            let d: f64 = row.iter().sum();
            if d > 0.0 {
                d.sqrt().recip()
            } else {
                0.0
            }
        })
        .collect())
}

/// `I + D^{-1/2} A D^{-1/2}` with `D` the diagonal of row sums and a
/// zero-degree row mapped to a zero scaling factor.
pub fn normalize_adjacency(a: &Tensor) -> Result<Tensor> {
    let s = inv_sqrt_degrees(a)?;
    let n = s.len();
    let mut out = a.clone();
    for (i, row) in out.data_mut().chunks_mut(n).enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v *= s[i] * s[j];
            if i == j {
                *v += 1.0;
            }
        }
    }
    Ok(out)
}

pub fn normalize_adjacency_backward(a: &Tensor, gy: &Tensor) -> Result<Tensor> {
    let s = inv_sqrt_degrees(a)?;
    let n = s.len();
    let (ad, gd) = (a.data(), gy.data());
    // dL/ds_k collects contributions from row k and column k of S A S.
    let mut gs = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let g = gd[i * n + j] * ad[i * n + j];
            gs[i] += g * s[j];
            gs[j] += g * s[i];
        }
    }
    let mut out = vec![0.0; n * n];
    for k in 0..n {
        // ds_k/dA_kl = -1/2 d_k^{-3/2} = -1/2 s_k^3 for every l in row k.
        let row_term = -0.5 * s[k] * s[k] * s[k] * gs[k];
        for l in 0..n {
            out[k * n + l] = gd[k * n + l] * s[k] * s[l] + row_term;
        }
    }
    Ok(Tensor::from_parts(vec![n, n], out))
}

/// Divides each row by its sum; all-zero rows stay zero.
pub fn row_normalize(a: &Tensor) -> Result<Tensor> {
    let (_, n) = a.dims2("row_normalize")?;
    let mut out = a.clone();
    for row in out.data_mut().chunks_mut(n) {
        let r: f64 = row.iter().sum();
        if r != 0.0 {
            row.iter_mut().for_each(|v| *v /= r);
        } else {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Ok(out)
}

pub fn row_normalize_backward(a: &Tensor, gy: &Tensor) -> Result<Tensor> {
    let (_, n) = a.dims2("row_normalize")?;
    let mut out = vec![0.0; a.len()];
    for (k, (row, grow)) in a.data().chunks(n).zip(gy.data().chunks(n)).enumerate() {
        let r: f64 = row.iter().sum();
        if r == 0.0 {
            continue;
        }
        let dot: f64 = row.iter().zip(grow).map(|(a, g)| a * g).sum();
        for l in 0..n {
            out[k * n + l] = grow[l] / r - dot / (r * r);
        }
    }
    Ok(Tensor::from_parts(a.shape().to_vec(), out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_half_at_zero_and_saturates_exactly() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
    }

    #[test]
    fn causal_conv_scalar_cases() {
        let x = Tensor::new(vec![4, 1, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let g = Tensor::new(vec![2, 1, 1], vec![1.0, 1.0]).unwrap();
        let y = causal_conv(&x, &g, 2, Padding::CausalLeft).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 4.0, 6.0]);
        let y = causal_conv(&x, &g, 2, Padding::Valid).unwrap();
        assert_eq!(y.data(), &[4.0, 6.0]);
        assert!(causal_conv(&x, &g, 4, Padding::Valid).is_err());
    }

    #[test]
    fn two_node_normalization() {
        let a = Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let n = normalize_adjacency(&a).unwrap();
        assert_eq!(n.data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn zero_rows_stay_zero() {
        let a = Tensor::from_rows(&[vec![0.0, 0.0], vec![2.0, 6.0]]).unwrap();
        assert_eq!(row_normalize(&a).unwrap().data(), &[0.0, 0.0, 0.25, 0.75]);
        let n = normalize_adjacency(&a).unwrap();
        assert_eq!(n.get(&[0, 0]), Some(1.0));
        assert_eq!(n.get(&[0, 1]), Some(0.0));
    }
}
