use super::DenseMatrix;
use crate::error::{Error, Result};

/// Adam moment accumulators for a fixed list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<DenseMatrix>,
    pub v: Vec<DenseMatrix>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &[&DenseMatrix]) -> Self {
        let zeros: Vec<_> = params.iter().map(|p| DenseMatrix::zeros(p.rows(), p.cols())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update. L2 is folded into the gradient (`g + wd·w`) before the
/// moment updates.
pub fn adam_step(
    params: &mut [&mut DenseMatrix],
    grads: &[&DenseMatrix],
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Invalid(format!(
            "adam: {} params, {} grads, {} accumulators",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::Shape {
                op: "adam_step",
                lhs: p.shape(),
                rhs: g.shape(),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (k, p) in params.iter_mut().enumerate() {
        let g = grads[k].as_slice();
        let m = state.m[k].as_mut_slice();
        let v = state.v[k].as_mut_slice();
        for (i, w) in p.as_mut_slice().iter_mut().enumerate() {
            let gi = g[i] + weight_decay * *w;
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DenseMatrix {
        DenseMatrix::filled(1, 1, v)
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut w = DenseMatrix::from_rows(&[[1.0, -2.0]]);
        let before = w.clone();
        let g = DenseMatrix::zeros(1, 2);
        let mut st = AdamState::new(&[&w]);
        adam_step(&mut [&mut w], &[&g], &mut st, 0.005, 0.0).unwrap();
        assert_eq!(w, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut w = scalar(0.3);
        let mut st = AdamState::new(&[&w]);
        adam_step(&mut [&mut w], &[&scalar(1.0)], &mut st, 0.005, 0.0).unwrap();
        // m̂ = 1, v̂ = 1 at t = 1
        let delta = w.as_slice()[0] - 0.3;
        assert!((delta + 0.005).abs() < 1e-6, "{delta}");
    }

    #[test]
    fn l2_adds_to_gradient() {
        let mut w = scalar(10.0);
        let mut st = AdamState::new(&[&w]);
        adam_step(&mut [&mut w], &[&scalar(0.0)], &mut st, 0.005, 0.0001).unwrap();
        // Effective gradient 0.001: m = 0.1·0.001
        assert!((st.m[0].as_slice()[0] - 0.1 * 0.001).abs() < 1e-18);
        assert!((st.v[0].as_slice()[0] - 0.001 * 0.001 * 0.001).abs() < 1e-18);
    }

    #[test]
    fn shape_mismatch() {
        let mut w = DenseMatrix::zeros(2, 2);
        let mut st = AdamState::new(&[&w]);
        let g = DenseMatrix::zeros(2, 1);
        assert!(adam_step(&mut [&mut w], &[&g], &mut st, 0.1, 0.0).is_err());
    }
}
