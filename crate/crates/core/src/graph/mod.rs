//! Graph storage, normalization, synthetic generation and node splits.

mod io;
mod sbm;
mod split;

pub use io::{load_graph, write_graph};
pub use sbm::{generate_sbm, SbmParams};
pub use split::{make_splits, SplitAssignment};

use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

/// Undirected graph in CSR form with dense node features.
///
/// Adjacency is symmetric, duplicate-free and has no self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    num_nodes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    features: DenseMatrix,
    labels: Option<Vec<u32>>,
    directed_source: bool,
}

impl SparseGraph {
    /// Build from an edge list. Edges are symmetrized (union of both
    /// directions), deduplicated, and self-loops are dropped.
    pub fn from_edges(
        num_nodes: usize,
        edges: &[(u32, u32)],
        features: DenseMatrix,
        labels: Option<Vec<u32>>,
        directed_source: bool,
    ) -> Result<Self> {
        if features.rows() != num_nodes {
            return Err(Error::Invalid(format!(
                "feature rows {} != node count {num_nodes}",
                features.rows()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != num_nodes {
                return Err(Error::Invalid(format!(
                    "label count {} != node count {num_nodes}",
                    l.len()
                )));
            }
        }
        let mut degree = vec![0usize; num_nodes];
        for (pos, &(u, v)) in edges.iter().enumerate() {
            if u as usize >= num_nodes || v as usize >= num_nodes {
                return Err(Error::Invalid(format!(
                    "edge {pos} ({u}, {v}) out of range for {num_nodes} nodes"
                )));
            }
            if u != v {
                degree[u as usize] += 1;
                degree[v as usize] += 1;
            }
        }
        let mut offsets = vec![0usize; num_nodes + 1];
        for i in 0..num_nodes {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut fill = offsets[..num_nodes].to_vec();
        let mut cols = vec![0u32; offsets[num_nodes]];
        for &(u, v) in edges {
            if u == v {
                continue;
            }
            cols[fill[u as usize]] = v;
            fill[u as usize] += 1;
            cols[fill[v as usize]] = u;
            fill[v as usize] += 1;
        }

        // Sort and dedup each row, compacting in place.
        let mut row_offsets = Vec::with_capacity(num_nodes + 1);
        row_offsets.push(0);
        let mut write = 0;
        for i in 0..num_nodes {
            let row = &mut cols[offsets[i]..offsets[i + 1]];
            row.sort_unstable();
            let mut last = None;
            for k in offsets[i]..offsets[i + 1] {
                let c = cols[k];
                if last != Some(c) {
                    cols[write] = c;
                    write += 1;
                    last = Some(c);
                }
            }
            row_offsets.push(write);
        }
        cols.truncate(write);

        Ok(Self {
            num_nodes,
            row_offsets,
            col_indices: cols,
            features,
            labels,
            directed_source,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.col_indices.len() / 2
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.col_indices
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.col_indices[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_offsets[i + 1] - self.row_offsets[i]
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max())
            .map_or(0, |&m| m as usize + 1)
    }

    pub fn directed_source(&self) -> bool {
        self.directed_source
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`.
    pub fn undirected_edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for u in 0..self.num_nodes {
            for &v in self.neighbors(u) {
                if (u as u32) < v {
                    out.push((u as u32, v));
                }
            }
        }
        out
    }
}

/// `D̂^{-1/2}(A + I)D̂^{-1/2}` in CSR form, with `d̂` counting the self-loop.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    num_nodes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    weights: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let span = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[span.clone()], &self.weights[span])
    }

    pub fn nnz(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let (cols, w) = self.row(i);
        match cols.binary_search(&(j as u32)) {
            Ok(k) => w[k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.num_nodes, self.num_nodes);
        for i in 0..self.num_nodes {
            let (cols, w) = self.row(i);
            for (&j, &v) in cols.iter().zip(w) {
                m.set(i, j as usize, v);
            }
        }
        m
    }
}

pub fn normalize_adjacency(g: &SparseGraph) -> NormalizedAdjacency {
    let n = g.num_nodes();
    let deg_hat: Vec<f64> = (0..n).map(|i| (g.degree(i) + 1) as f64).collect();
    // 1/√(d̂_i·d̂_j) rather than a product of two roots: exact for perfect
    // squares and symmetric bit-for-bit.
    let w = |i: usize, j: usize| 1.0 / (deg_hat[i] * deg_hat[j]).sqrt();
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::with_capacity(g.col_indices.len() + n);
    let mut weights = Vec::with_capacity(g.col_indices.len() + n);
    row_offsets.push(0);
    for i in 0..n {
        let mut self_done = false;
        for &j in g.neighbors(i) {
            if !self_done && j as usize > i {
                col_indices.push(i as u32);
                weights.push(w(i, i));
                self_done = true;
            }
            col_indices.push(j);
            weights.push(w(i, j as usize));
        }
        if !self_done {
            col_indices.push(i as u32);
            weights.push(w(i, i));
        }
        row_offsets.push(col_indices.len());
    }
    NormalizedAdjacency {
        num_nodes: n,
        row_offsets,
        col_indices,
        weights,
    }
}

/// Sorted 1-hop neighbor lists, excluding the node itself.
pub fn neighbor_sets(g: &SparseGraph) -> Vec<Vec<usize>> {
    (0..g.num_nodes())
        .map(|i| g.neighbors(i).iter().map(|&j| j as usize).collect())
        .collect()
}
