use super::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::par;

/// Sparse-dense product `adj · x`.
pub fn spmm(adj: &NormalizedAdjacency, x: &DenseMatrix) -> Result<DenseMatrix> {
    if adj.num_nodes() != x.rows() {
        return Err(Error::Shape {
            op: "spmm",
            lhs: (adj.num_nodes(), adj.num_nodes()),
            rhs: x.shape(),
        });
    }
    let width = x.cols();
    let mut out = DenseMatrix::zeros(x.rows(), width);
    par::for_each_row(out.as_mut_slice(), width, |i, row| {
        let (cols, weights) = adj.row(i);
        for (&j, &w) in cols.iter().zip(weights) {
            for (o, v) in row.iter_mut().zip(x.row(j as usize)) {
                *o += w * v;
            }
        }
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normalize_adjacency, SparseGraph};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn adj(n: usize, edges: &[(u32, u32)]) -> NormalizedAdjacency {
        normalize_adjacency(&SparseGraph::from_edges(n, edges, DenseMatrix::zeros(n, 1), None, false).unwrap())
    }

    #[test]
    fn single_node_identity() {
        let x = DenseMatrix::from_rows(&[[1.5, -2.0, 7.0]]);
        assert_eq!(spmm(&adj(1, &[]), &x).unwrap(), x);
    }

    #[test]
    fn two_node_average() {
        let x = DenseMatrix::from_rows(&[[2.0], [4.0]]);
        let y = spmm(&adj(2, &[(0, 1)]), &x).unwrap();
        assert_eq!(y.as_slice(), &[3.0, 3.0]);
    }

    #[test]
    fn matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut edges = Vec::new();
        for u in 0..8u32 {
            for v in u + 1..8 {
                if rng.gen_bool(0.4) {
                    edges.push((u, v));
                }
            }
        }
        let a = adj(8, &edges);
        let x = DenseMatrix::from_vec(8, 3, (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let y = spmm(&a, &x).unwrap();
        let dense = a.to_dense();
        let mut oracle = DenseMatrix::zeros(8, 3);
        for i in 0..8 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..8 {
                    s += dense.get(i, k) * x.get(k, j);
                }
                oracle.set(i, j, s);
            }
        }
        assert!(y.max_abs_diff(&oracle) < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        assert!(spmm(&adj(3, &[]), &DenseMatrix::zeros(2, 1)).is_err());
    }
}
