//! Dense matrices, sparse-dense products, a small reverse-mode tape,
//! Glorot initialization and Adam.

mod adam;
pub mod checkpoint;
mod dense;
mod init;
mod sparse;
mod tape;

pub use adam::{adam_step, AdamState};
pub use dense::DenseMatrix;
pub use init::{glorot_init, glorot_limit};
pub use sparse::spmm;
pub use tape::{Gradients, OpKind, Tape, Var};

use crate::error::{Error, Result};

/// Column-wise standardization: `(m − μ) / (σ·√N)` with population σ.
///
/// Returns the standardized matrix and the per-column divisor `σ·√N`
/// (the Euclidean norm of the centered column).
pub(crate) fn standardize_columns(m: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>, Vec<f64>)> {
    let (n, d) = m.shape();
    if n == 0 {
        return Err(Error::Invalid("cannot standardize an empty matrix".into()));
    }
    let mut means = vec![0.0; d];
    for r in 0..n {
        for (acc, v) in means.iter_mut().zip(m.row(r)) {
            *acc += v;
        }
    }
    means.iter_mut().for_each(|v| *v /= n as f64);
    // Second pass removes the rounding error of the first.
    let mut fix = vec![0.0; d];
    for r in 0..n {
        for ((acc, v), mu) in fix.iter_mut().zip(m.row(r)).zip(&means) {
            *acc += v - mu;
        }
    }
    means.iter_mut().zip(&fix).for_each(|(mu, f)| *mu += f / n as f64);
    let mut norms = vec![0.0; d];
    for r in 0..n {
        for ((acc, v), mu) in norms.iter_mut().zip(m.row(r)).zip(&means) {
            let c = v - mu;
            *acc += c * c;
        }
    }
    for (c, s) in norms.iter_mut().enumerate() {
        *s = s.sqrt();
        // Relative threshold: a column of identical large values can leave
        // rounding residue after centering.
        let scale = means[c].abs().max(1.0);
        if *s <= 1e-12 * scale * (n as f64).sqrt() {
            return Err(Error::ZeroVariance { column: c });
        }
    }
    let mut out = m.clone();
    for r in 0..n {
        for ((v, mu), s) in out.row_mut(r).iter_mut().zip(&means).zip(&norms) {
            *v = (*v - mu) / s;
        }
    }
    Ok((out, means, norms))
}
