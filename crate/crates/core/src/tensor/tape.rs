//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! Nodes are appended in evaluation order, so every input id is smaller
//! than the id of the node that consumes it. `backward` walks the tape once
//! in reverse.

use super::{spmm, standardize_columns, DenseMatrix};
use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Param,
    Constant,
    StopGradient,
    MatMul,
    MatMulTn,
    SpMM,
    Relu,
    Standardize,
    GatherRows,
    Add,
    Sub,
    Scale,
    SubIdentity,
    FrobSq,
    Sum,
}

enum Op<'a> {
    Leaf,
    StopGradient,
    MatMul(Var, Var),
    MatMulTn(Var, Var),
    SpMM(&'a NormalizedAdjacency, Var),
    Relu(Var),
    Standardize { input: Var, norms: Vec<f64> },
    GatherRows(Var, Vec<usize>),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    SubIdentity(Var),
    FrobSq(Var),
    Sum(Var),
}

struct Node<'a> {
    kind: OpKind,
    op: Op<'a>,
    value: DenseMatrix,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`, or `None` when `v` does not
    /// require gradients or does not reach the loss.
    pub fn get(&self, v: Var) -> Option<&DenseMatrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

fn shape_err(op: &'static str, lhs: &DenseMatrix, rhs: &DenseMatrix) -> Error {
    Error::Shape {
        op,
        lhs: lhs.shape(),
        rhs: rhs.shape(),
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].kind
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, kind: OpKind, op: Op<'a>, value: DenseMatrix, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            kind,
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: DenseMatrix) -> Var {
        self.push(OpKind::Param, Op::Leaf, value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push(OpKind::Constant, Op::Leaf, value, false)
    }

    /// Same value as `x`; gradients stop here.
    pub fn stop_gradient(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.push(OpKind::StopGradient, Op::StopGradient, value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(OpKind::MatMul, Op::MatMul(a, b), value, rg))
    }

    /// `aᵀ · b`.
    pub fn matmul_tn(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_tn(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(OpKind::MatMulTn, Op::MatMulTn(a, b), value, rg))
    }

    pub fn spmm(&mut self, adj: &'a NormalizedAdjacency, x: Var) -> Result<Var> {
        let value = spmm(adj, self.value(x))?;
        let rg = self.rg(x);
        Ok(self.push(OpKind::SpMM, Op::SpMM(adj, x), value, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        let rg = self.rg(x);
        self.push(OpKind::Relu, Op::Relu(x), value, rg)
    }

    /// Column standardization to zero mean and unit Euclidean norm.
    pub fn standardize(&mut self, x: Var) -> Result<Var> {
        let (value, _, norms) = standardize_columns(self.value(x))?;
        let rg = self.rg(x);
        Ok(self.push(OpKind::Standardize, Op::Standardize { input: x, norms }, value, rg))
    }

    pub fn gather_rows(&mut self, x: Var, indices: Vec<usize>) -> Result<Var> {
        let src = self.value(x);
        if let Some(&bad) = indices.iter().find(|&&i| i >= src.rows()) {
            return Err(Error::Invalid(format!("gather index {bad} >= {} rows", src.rows())));
        }
        let value = src.gather_rows(&indices);
        let rg = self.rg(x);
        Ok(self.push(OpKind::GatherRows, Op::GatherRows(x, indices), value, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(OpKind::Add, Op::Add(a, b), value, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(OpKind::Sub, Op::Sub(a, b), value, rg))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let value = self.value(x).scale(s);
        let rg = self.rg(x);
        self.push(OpKind::Scale, Op::Scale(x, s), value, rg)
    }

    /// `x − I` for square `x`.
    pub fn sub_identity(&mut self, x: Var) -> Result<Var> {
        let src = self.value(x);
        if src.rows() != src.cols() {
            return Err(shape_err("sub_identity", src, src));
        }
        let mut value = src.clone();
        for i in 0..value.rows() {
            value.set(i, i, value.get(i, i) - 1.0);
        }
        let rg = self.rg(x);
        Ok(self.push(OpKind::SubIdentity, Op::SubIdentity(x), value, rg))
    }

    /// Squared Frobenius norm as a 1×1 node.
    pub fn frob_sq(&mut self, x: Var) -> Var {
        let value = DenseMatrix::filled(1, 1, self.value(x).frob_sq());
        let rg = self.rg(x);
        self.push(OpKind::FrobSq, Op::FrobSq(x), value, rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = DenseMatrix::filled(1, 1, self.value(x).sum());
        let rg = self.rg(x);
        self.push(OpKind::Sum, Op::Sum(x), value, rg)
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.shape(), (1, 1));
        m.as_slice()[0]
    }

    /// Gradients of the scalar `loss` w.r.t. every node that requires them.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let (rows, cols) = self.value(loss).shape();
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarLoss { rows, cols });
        }
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; self.nodes.len()];
        if !self.rg(loss) {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(DenseMatrix::filled(1, 1, 1.0));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
                continue;
            }
            let acc = |grads: &mut Vec<Option<DenseMatrix>>, v: Var, delta: DenseMatrix| {
                if !self.rg(v) {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => existing.add_assign(&delta).expect("gradient shape"),
                    slot @ None => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Leaf | Op::StopGradient => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.rg(*a) {
                        acc(&mut grads, *a, g.matmul_nt(bv)?);
                    }
                    if self.rg(*b) {
                        acc(&mut grads, *b, av.matmul_tn(&g)?);
                    }
                }
                Op::MatMulTn(a, b) => {
                    // C = AᵀB: dA = B·dCᵀ, dB = A·dC
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.rg(*a) {
                        acc(&mut grads, *a, bv.matmul_nt(&g)?);
                    }
                    if self.rg(*b) {
                        acc(&mut grads, *b, av.matmul(&g)?);
                    }
                }
                Op::SpMM(adj, x) => {
                    // Normalized adjacency is symmetric.
                    acc(&mut grads, *x, spmm(adj, &g)?);
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    let mut d = g;
                    for (dv, &v) in d.as_mut_slice().iter_mut().zip(xv.as_slice()) {
                        if v <= 0.0 {
                            *dv = 0.0;
                        }
                    }
                    acc(&mut grads, *x, d);
                }
                Op::Standardize { input, norms } => {
                    acc(&mut grads, *input, standardize_backward(&node.value, norms, &g));
                }
                Op::GatherRows(x, indices) => {
                    let src = self.value(*x);
                    let mut d = DenseMatrix::zeros(src.rows(), src.cols());
                    for (r, &i) in indices.iter().enumerate() {
                        for (o, v) in d.row_mut(i).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *x, d);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.scale(-1.0));
                    acc(&mut grads, *a, g);
                }
                Op::Scale(x, s) => acc(&mut grads, *x, g.scale(*s)),
                Op::SubIdentity(x) => acc(&mut grads, *x, g),
                Op::FrobSq(x) => {
                    let s = 2.0 * g.as_slice()[0];
                    acc(&mut grads, *x, self.value(*x).scale(s));
                }
                Op::Sum(x) => {
                    let (r, c) = self.value(*x).shape();
                    acc(&mut grads, *x, DenseMatrix::filled(r, c, g.as_slice()[0]));
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// For `y = (x − μ)/s` per column with `s = ‖x − μ‖`:
/// `dx = (g − mean(g) − y·(yᵀg)) / s`.
fn standardize_backward(y: &DenseMatrix, norms: &[f64], g: &DenseMatrix) -> DenseMatrix {
    let (n, d) = y.shape();
    let mut g_mean = vec![0.0; d];
    let mut yg = vec![0.0; d];
    for r in 0..n {
        for c in 0..d {
            g_mean[c] += g.get(r, c);
            yg[c] += y.get(r, c) * g.get(r, c);
        }
    }
    g_mean.iter_mut().for_each(|v| *v /= n as f64);
    let mut out = DenseMatrix::zeros(n, d);
    for r in 0..n {
        for c in 0..d {
            out.set(r, c, (g.get(r, c) - g_mean[c] - y.get(r, c) * yg[c]) / norms[c]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normalize_adjacency, SparseGraph};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        DenseMatrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Central differences of `f` at `x`, compared to `analytic`.
    fn check_fd(x: &DenseMatrix, analytic: &DenseMatrix, f: impl Fn(&DenseMatrix) -> f64) {
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..x.len() {
            let mut plus = x.clone();
            plus.as_mut_slice()[k] += h;
            let mut minus = x.clone();
            minus.as_mut_slice()[k] -= h;
            let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
            let a = analytic.as_slice()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut t = Tape::new();
        let w = t.param(DenseMatrix::from_rows(&[[1.0, -2.0], [3.0, 0.5]]));
        let loss = t.sum(w);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap().as_slice(), &[1.0; 4]);
    }

    #[test]
    fn frobenius_gradient_is_twice_w() {
        let w0 = DenseMatrix::from_rows(&[[1.0, -2.0], [3.0, 0.5]]);
        let mut t = Tape::new();
        let w = t.param(w0.clone());
        let loss = t.frob_sq(w);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap(), &w0.scale(2.0));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let w = t.param(DenseMatrix::zeros(2, 2));
        assert!(matches!(t.backward(w), Err(Error::NonScalarLoss { rows: 2, cols: 2 })));
    }

    #[test]
    fn stop_gradient_blocks_flow() {
        let mut t = Tape::new();
        let a = t.param(DenseMatrix::from_rows(&[[2.0]]));
        let b = t.param(DenseMatrix::from_rows(&[[3.0]]));
        let sa = t.stop_gradient(a);
        let p = t.matmul(sa, b).unwrap();
        let loss = t.sum(p);
        let g = t.backward(loss).unwrap();
        assert!(g.get(a).is_none());
        assert!(g.get(sa).is_none());
        assert_eq!(g.get(b).unwrap().as_slice(), &[2.0]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut t = Tape::new();
        let c = t.constant(DenseMatrix::from_rows(&[[1.0, 2.0]]));
        let loss = t.frob_sq(c);
        let g = t.backward(loss).unwrap();
        assert!(g.get(c).is_none());
    }

    #[test]
    fn inputs_precede_consumers() {
        let mut t = Tape::new();
        let a = t.param(DenseMatrix::identity(2));
        let b = t.relu(a);
        let c = t.frob_sq(b);
        assert!(a < b && b < c);
        assert_eq!(t.kind(c), OpKind::FrobSq);
    }

    // 0.7·‖GᵀG − I‖² + ‖S‖² with S = standardize(relu(A·X·W)), G = S[idx]
    fn composite(adj: &NormalizedAdjacency, x: &DenseMatrix, w: &DenseMatrix, idx: &[usize]) -> (f64, DenseMatrix, DenseMatrix) {
        let mut t = Tape::new();
        let xv = t.param(x.clone());
        let wv = t.param(w.clone());
        let ax = t.spmm(adj, xv).unwrap();
        let h = t.matmul(ax, wv).unwrap();
        let r = t.relu(h);
        let s = t.standardize(r).unwrap();
        let gsel = t.gather_rows(s, idx.to_vec()).unwrap();
        let gram = t.matmul_tn(gsel, gsel).unwrap();
        let off = t.sub_identity(gram).unwrap();
        let disc = t.frob_sq(off);
        let scaled = t.scale(disc, 0.7);
        let inv = t.frob_sq(s);
        let loss = t.add(scaled, inv).unwrap();
        let g = t.backward(loss).unwrap();
        (t.scalar(loss), g.get(xv).unwrap().clone(), g.get(wv).unwrap().clone())
    }

    #[test]
    fn composite_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (1, 4)];
        let g = SparseGraph::from_edges(6, &edges, DenseMatrix::zeros(6, 1), None, false).unwrap();
        let adj = normalize_adjacency(&g);
        let x = random(6, 3, &mut rng);
        let w = random(3, 4, &mut rng);
        let idx = [0, 2, 2, 5];
        let (_, gx, gw) = composite(&adj, &x, &w, &idx);
        check_fd(&x, &gx, |xp| composite(&adj, xp, &w, &idx).0);
        check_fd(&w, &gw, |wp| composite(&adj, &x, wp, &idx).0);
    }

    #[test]
    fn standardize_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(7, 3, &mut rng);
        let weights = random(7, 3, &mut rng);
        let eval = |xp: &DenseMatrix| {
            let mut t = Tape::new();
            let v = t.param(xp.clone());
            let c = t.constant(weights.clone());
            let s = t.standardize(v).unwrap();
            let d = t.sub(s, c).unwrap();
            let l = t.frob_sq(d);
            let g = t.backward(l).unwrap();
            (t.scalar(l), g.get(v).unwrap().clone())
        };
        let (_, analytic) = eval(&x);
        check_fd(&x, &analytic, |xp| eval(xp).0);
    }

    #[test]
    fn matmul_tn_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random(5, 3, &mut rng);
        let b = random(5, 2, &mut rng);
        let eval = |ap: &DenseMatrix, bp: &DenseMatrix| {
            let mut t = Tape::new();
            let av = t.param(ap.clone());
            let bv = t.param(bp.clone());
            let c = t.matmul_tn(av, bv).unwrap();
            let l = t.frob_sq(c);
            let g = t.backward(l).unwrap();
            (t.scalar(l), g.get(av).unwrap().clone(), g.get(bv).unwrap().clone())
        };
        let (_, ga, gb) = eval(&a, &b);
        check_fd(&a, &ga, |ap| eval(ap, &b).0);
        check_fd(&b, &gb, |bp| eval(&a, bp).0);
    }

    #[test]
    fn relu_subgradient_zero_at_zero() {
        let mut t = Tape::new();
        let x = t.param(DenseMatrix::from_rows(&[[0.0, 1.0, -1.0]]));
        let r = t.relu(x);
        let l = t.sum(r);
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(x).unwrap().as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn standardize_rejects_constant_column() {
        let mut t = Tape::new();
        let x = t.param(DenseMatrix::from_rows(&[[1.0, 5.0], [2.0, 5.0]]));
        assert!(matches!(t.standardize(x), Err(Error::ZeroVariance { column: 1 })));
    }
}
