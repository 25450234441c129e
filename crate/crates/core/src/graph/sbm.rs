use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::SparseGraph;
use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbmParams {
    pub blocks: usize,
    pub nodes_per_block: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feat_dim: usize,
    pub feat_shift: f64,
    pub seed: u64,
}

/// Stochastic block model with Gaussian features.
///
/// Each block draws a random unit direction; node features are
/// `feat_shift · direction + N(0, I)`. Labels are block ids. Edge draws are
/// made for every unordered pair in index order, so the result is a pure
/// function of the parameters.
pub fn generate_sbm(p: &SbmParams) -> Result<SparseGraph> {
    let valid = |x: f64| (0.0..=1.0).contains(&x);
    // p_in = p_out = 0 is accepted as the edgeless degenerate case.
    let ordered = p.p_out < p.p_in || (p.p_in == 0.0 && p.p_out == 0.0);
    if !valid(p.p_in) || !valid(p.p_out) || !ordered {
        return Err(Error::Invalid(format!(
            "need 0 <= p_out < p_in <= 1, got p_in={} p_out={}",
            p.p_in, p.p_out
        )));
    }
    if !p.feat_shift.is_finite() {
        return Err(Error::Invalid("feat_shift must be finite".into()));
    }
    let n = p.blocks * p.nodes_per_block;
    let block = |i: usize| i / p.nodes_per_block.max(1);

    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let prob = if block(u) == block(v) { p.p_in } else { p.p_out };
            if rng.gen::<f64>() < prob {
                edges.push((u as u32, v as u32));
            }
        }
    }

    let mut directions = DenseMatrix::zeros(p.blocks, p.feat_dim);
    for b in 0..p.blocks {
        let row = directions.row_mut(b);
        for v in row.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v *= p.feat_shift / norm);
        }
    }
    let mut features = DenseMatrix::zeros(n, p.feat_dim);
    for i in 0..n {
        let mean = directions.row(block(i)).to_vec();
        for (f, m) in features.row_mut(i).iter_mut().zip(mean) {
            let noise: f64 = rng.sample(StandardNormal);
            *f = m + noise;
        }
    }
    let labels = (0..n).map(|i| block(i) as u32).collect();
    SparseGraph::from_edges(n, &edges, features, Some(labels), false)
}
