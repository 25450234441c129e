//! Column standardization and k-NN positive partitions over 1-hop
//! neighborhoods.

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{standardize_columns, DenseMatrix};

/// Column-standardized matrix: every column has zero mean and unit
/// Euclidean norm, so `diag(MᵀM) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedMatrix {
    values: DenseMatrix,
    means: Vec<f64>,
    /// Per-column divisor `σ·√N`.
    scales: Vec<f64>,
}

impl StandardizedMatrix {
    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn into_values(self) -> DenseMatrix {
        self.values
    }
}

/// `(m − μ) / (σ·√N)` per column with population σ. Fails on a
/// zero-variance column.
pub fn standardize(m: &DenseMatrix) -> Result<StandardizedMatrix> {
    let (values, means, scales) = standardize_columns(m)?;
    Ok(StandardizedMatrix { values, means, scales })
}

/// One positive part: for each target node, its positive node and whether
/// it participates.
#[derive(Debug, Clone, PartialEq)]
pub struct Part {
    positive: Vec<usize>,
    mask: Vec<bool>,
    distance: Vec<f64>,
}

impl Part {
    pub fn positive(&self, i: usize) -> Option<usize> {
        self.mask[i].then(|| self.positive[i])
    }

    pub fn participates(&self, i: usize) -> bool {
        self.mask[i]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Euclidean distance between node `i` and its positive in this part.
    pub fn distance(&self, i: usize) -> Option<f64> {
        self.mask[i].then(|| self.distance[i])
    }

    /// `(target, positive)` pairs of participating nodes, ascending by target.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        (0..self.mask.len())
            .filter(|&i| self.mask[i])
            .map(|i| (i, self.positive[i]))
            .collect()
    }

    pub fn participant_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// `K` parts: part 0 is the identity; part `k ≥ 1` maps each node to its
/// `k`-th nearest 1-hop neighbor.
#[derive(Debug, Clone, PartialEq)]
pub struct PositivePartition {
    parts: Vec<Part>,
}

impl PositivePartition {
    pub fn k(&self) -> usize {
        self.parts.len()
    }

    pub fn parts(&self) -> &[Part] {
        &self.parts
    }

    pub fn num_nodes(&self) -> usize {
        self.parts[0].mask.len()
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// For each node take the `K − 1` nearest neighbors by Euclidean distance
/// between rows of `h_target`, ties broken by smaller node index. A node
/// with degree `d < K − 1` participates only in parts `2..=d+1`.
pub fn build_positive_partitions(
    h_target: &DenseMatrix,
    neighbors: &[Vec<usize>],
    k: usize,
) -> Result<PositivePartition> {
    if k < 1 {
        return Err(Error::Invalid("K must be >= 1".into()));
    }
    let n = h_target.rows();
    if neighbors.len() != n {
        return Err(Error::Invalid(format!(
            "{} neighbor lists for {n} representation rows",
            neighbors.len()
        )));
    }
    if let Some(bad) = neighbors.iter().flatten().find(|&&j| j >= n) {
        return Err(Error::Invalid(format!("neighbor index {bad} >= {n}")));
    }
    let extra = k - 1;
    let nearest: Vec<Vec<(f64, usize)>> = par::map_range(n, |i| {
        if extra == 0 {
            return Vec::new();
        }
        let hi = h_target.row(i);
        let mut cand: Vec<(f64, usize)> = neighbors[i]
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| (euclidean(hi, h_target.row(j)), j))
            .collect();
        cand.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cand.dedup_by_key(|c| c.1);
        cand.truncate(extra);
        cand
    });

    let mut parts = Vec::with_capacity(k);
    parts.push(Part {
        positive: (0..n).collect(),
        mask: vec![true; n],
        distance: vec![0.0; n],
    });
    for slot in 0..extra {
        let mut part = Part {
            positive: vec![0; n],
            mask: vec![false; n],
            distance: vec![0.0; n],
        };
        for (i, near) in nearest.iter().enumerate() {
            if let Some(&(d, j)) = near.get(slot) {
                part.positive[i] = j;
                part.mask[i] = true;
                part.distance[i] = d;
            }
        }
        parts.push(part);
    }
    Ok(PositivePartition { parts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standardize_two_rows() {
        let s = standardize(&DenseMatrix::from_rows(&[[1.0], [3.0]])).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!((s.values().get(0, 0) + h).abs() < 1e-15);
        assert!((s.values().get(1, 0) - h).abs() < 1e-15);
        assert_eq!(s.means(), &[2.0]);
    }

    #[test]
    fn standardize_zero_variance_names_column() {
        let m = DenseMatrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 2.0, 5.0]]);
        assert!(matches!(standardize(&m), Err(Error::ZeroVariance { column: 1 })));
    }

    #[test]
    fn standardize_gram_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = DenseMatrix::from_vec(20, 6, (0..120).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
        let s = standardize(&m).unwrap();
        let gram = s.values().matmul_tn(s.values()).unwrap();
        for c in 0..6 {
            assert!((gram.get(c, c) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn single_part_is_identity() {
        let h = DenseMatrix::from_rows(&[[0.0], [1.0], [2.0]]);
        let p = build_positive_partitions(&h, &[vec![1], vec![0, 2], vec![1]], 1).unwrap();
        assert_eq!(p.k(), 1);
        assert_eq!(p.parts()[0].pairs(), vec![(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn tie_prefers_smaller_index() {
        // Path 0-1-2 with 0 and 2 equidistant from 1.
        let h = DenseMatrix::from_rows(&[[0.0], [1.0], [2.0]]);
        let nb = vec![vec![1], vec![2, 0], vec![1]];
        let p = build_positive_partitions(&h, &nb, 3).unwrap();
        assert_eq!(p.parts()[1].positive(1), Some(0));
        assert_eq!(p.parts()[2].positive(1), Some(2));
        // Endpoints have degree 1: absent from the third part.
        assert_eq!(p.parts()[1].positive(0), Some(1));
        assert!(!p.parts()[2].participates(0));
        assert!(!p.parts()[2].participates(2));
    }

    #[test]
    fn zero_k_rejected() {
        assert!(build_positive_partitions(&DenseMatrix::zeros(1, 1), &[vec![]], 0).is_err());
    }

    /// Sort every full neighbor list by exact distance, independently of
    /// the implementation's truncation.
    fn brute_force(h: &DenseMatrix, nb: &[Vec<usize>], k: usize) -> Vec<Vec<Option<usize>>> {
        let n = h.rows();
        let mut out = vec![vec![None; n]; k];
        for i in 0..n {
            out[0][i] = Some(i);
            let mut all: Vec<usize> = nb[i].clone();
            all.sort_by(|&a, &b| {
                let da: f64 = (0..h.cols()).map(|c| (h.get(i, c) - h.get(a, c)).powi(2)).sum::<f64>().sqrt();
                let db: f64 = (0..h.cols()).map(|c| (h.get(i, c) - h.get(b, c)).powi(2)).sum::<f64>().sqrt();
                da.partial_cmp(&db).unwrap().then(a.cmp(&b))
            });
            for (slot, &j) in all.iter().enumerate().take(k - 1) {
                out[slot + 1][i] = Some(j);
            }
        }
        out
    }

    fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<usize>> {
        let p = rng.gen_range(0.0..0.5);
        let mut nb = vec![Vec::new(); n];
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen_bool(p) {
                    nb[u].push(v);
                    nb[v].push(u);
                }
            }
        }
        nb
    }

    #[test]
    fn matches_brute_force_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100 {
            let n = rng.gen_range(1..=30);
            let nb = random_graph(&mut rng, n);
            let h = DenseMatrix::from_vec(n, 8, (0..n * 8).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let k = rng.gen_range(1..=5);
            let p = build_positive_partitions(&h, &nb, k).unwrap();
            let oracle = brute_force(&h, &nb, k);
            for (slot, part) in p.parts().iter().enumerate() {
                for (i, want) in oracle[slot].iter().enumerate() {
                    assert_eq!(part.positive(i), *want);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn partition_invariants(seed in any::<u64>(), n in 1usize..25, k in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let nb = random_graph(&mut rng, n);
            let h = DenseMatrix::from_vec(n, 3, (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let p = build_positive_partitions(&h, &nb, k).unwrap();
            for (i, adj) in nb.iter().enumerate() {
                let count = p.parts()[1..].iter().filter(|part| part.participates(i)).count();
                prop_assert_eq!(count, adj.len().min(k - 1));
                let mut seen = Vec::new();
                let mut last = 0.0;
                for (slot, part) in p.parts().iter().enumerate().skip(1) {
                    // Participation is degree >= slot.
                    prop_assert_eq!(part.participates(i), adj.len() >= slot);
                    if let Some(j) = part.positive(i) {
                        prop_assert!(adj.contains(&j));
                        prop_assert!(!seen.contains(&j));
                        let d = part.distance(i).unwrap();
                        prop_assert!(d >= last);
                        last = d;
                        seen.push(j);
                    }
                }
            }

            // Storage order of adjacency lists must not matter.
            let mut shuffled = nb.clone();
            for list in &mut shuffled {
                list.shuffle(&mut rng);
            }
            prop_assert_eq!(build_positive_partitions(&h, &shuffled, k).unwrap(), p);
        }

        #[test]
        fn standardized_columns_unit(seed in any::<u64>(), n in 2usize..40, d in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = DenseMatrix::from_vec(n, d, (0..n * d).map(|_| rng.gen_range(-10.0..10.0)).collect()).unwrap();
            let s = standardize(&m).unwrap();
            for c in 0..d {
                let col = s.values().column(c);
                prop_assert!((col.iter().sum::<f64>() / n as f64).abs() < 1e-10);
                prop_assert!((col.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() < 1e-10);
            }
            // Positive affine maps per column leave the result unchanged.
            let mut affine = m.clone();
            let coeffs: Vec<(f64, f64)> = (0..d).map(|_| (rng.gen_range(0.1..5.0), rng.gen_range(-5.0..5.0))).collect();
            for r in 0..n {
                for (c, &(a, b)) in coeffs.iter().enumerate() {
                    affine.set(r, c, a * m.get(r, c) + b);
                }
            }
            prop_assert!(standardize(&affine).unwrap().values().max_abs_diff(s.values()) < 1e-9);
        }
    }
}
