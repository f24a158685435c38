//! Adjacency normalizations used by the graph convolutions.

use dan_tensor::{ops, Tensor};

use crate::error::{shape_mismatch, Result, YnetError};

pub(crate) fn check_nonnegative(t: &Tensor) -> Result<()> {
    match t.data().iter().position(|&v| v < 0.0) {
        Some(index) => Err(YnetError::NegativeEntry {
            index,
            value: t.data()[index],
        }),
        None => Ok(()),
    }
}

fn check_square(a: &Tensor) -> Result<usize> {
    match a.shape() {
        &[n, m] if n == m => Ok(n),
        s => Err(shape_mismatch("adjacency", &[s[0], s[0]], s)),
    }
}

/// `I + D^{-1/2} A D^{-1/2}` where `D` holds the row sums of `A`.
///
/// A node with zero degree keeps only its self loop.
pub fn normalize_adjacency(a: &Tensor) -> Result<Tensor> {
    check_square(a)?;
    check_nonnegative(a)?;
    Ok(ops::normalize_adjacency(a)?)
}

/// Forward and backward random-walk transition matrices
/// `(D_out^{-1} A, D_in^{-1} A^T)`. Rows without mass stay zero.
pub fn transition_matrices(a: &Tensor) -> Result<(Tensor, Tensor)> {
    check_square(a)?;
    check_nonnegative(a)?;
    let forward = ops::row_normalize(a)?;
    let backward = ops::row_normalize(&a.transpose()?)?;
    Ok((forward, backward))
}
