use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DenseMatrix;

/// Glorot/Xavier uniform bound `√(6 / (rows + cols))`.
pub fn glorot_limit(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

/// I.i.d. uniform draws on `[−a, a]` with the Glorot bound.
pub fn glorot_init(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    assert!(rows >= 1 && cols >= 1, "glorot_init needs positive dimensions");
    let a = glorot_limit(rows, cols);
    let dist = Uniform::new_inclusive(-a, a);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| dist.sample(&mut rng)).collect();
    DenseMatrix::from_vec(rows, cols, data).expect("uniform samples are finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_three_has_unit_bound() {
        assert_eq!(glorot_limit(3, 3), 1.0);
        let w = glorot_init(3, 3, 1);
        assert!(w.as_slice().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn same_seed_same_matrix() {
        assert_eq!(glorot_init(4, 7, 42), glorot_init(4, 7, 42));
        assert_ne!(glorot_init(4, 7, 42), glorot_init(4, 7, 43));
    }

    #[test]
    fn variance_matches_uniform() {
        let w = glorot_init(1000, 1000, 9);
        let a = glorot_limit(1000, 1000);
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let var = w.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let expected = a * a / 3.0;
        assert!((var - expected).abs() / expected < 0.05, "var={var} expected={expected}");
    }
}
