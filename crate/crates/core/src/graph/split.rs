use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Train/valid/test partition of `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Seeded shuffle-partition. Train and valid sizes are floored; the
/// remainder goes to test.
pub fn make_splits(n: usize, ratios: [f64; 3], seed: u64) -> Result<SplitAssignment> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!("split ratios must be in [0,1] and sum to 1, got {ratios:?}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    // Guard against 0.1 * 10 = 0.9999... style truncation.
    let count = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
    let n_train = count(ratios[0]).min(n);
    let n_valid = count(ratios[1]).min(n - n_train);
    let test = order.split_off(n_train + n_valid);
    let valid = order.split_off(n_train);
    Ok(SplitAssignment {
        train: order,
        valid,
        test,
        seed,
    })
}
