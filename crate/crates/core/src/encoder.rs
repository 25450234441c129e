//! Siamese GCN encoders, the online projector, and the EMA coupling.

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::tensor::{glorot_init, spmm, DenseMatrix, Tape, Var};

/// GCN weights `W¹..Wᴸ`: `H^l = σ(Â H^{l-1} W^l)` with ReLU between layers
/// and a linear last layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnStack {
    layers: Vec<DenseMatrix>,
}

impl GcnStack {
    pub fn new(layers: Vec<DenseMatrix>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Invalid("GCN stack needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].cols() != w[1].rows() {
                return Err(Error::Shape {
                    op: "gcn_stack",
                    lhs: w[0].shape(),
                    rhs: w[1].shape(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DenseMatrix] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseMatrix] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].cols()
    }
}

/// `Z = ReLU(H·W_a)·W_b`, width `D → D_q → D`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    pub hidden: DenseMatrix,
    pub output: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub online: GcnStack,
    pub target: GcnStack,
    pub projector: Projector,
}

/// splitmix64 step, used to derive independent per-tensor seeds.
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Glorot-initialize the online stack and projector; the target starts as
/// an exact copy of the online stack.
pub fn init_siamese(cfg: &TrainConfig, num_features: usize, seed: u64) -> Result<ModelParams> {
    cfg.validate()?;
    if num_features == 0 {
        return Err(Error::Invalid("graph has no features".into()));
    }
    let mut layers = Vec::with_capacity(cfg.layers);
    let mut fan_in = num_features;
    for l in 0..cfg.layers {
        layers.push(glorot_init(fan_in, cfg.dim, derive_seed(seed, l as u64)));
        fan_in = cfg.dim;
    }
    let online = GcnStack::new(layers)?;
    let stream = cfg.layers as u64;
    let projector = Projector {
        hidden: glorot_init(cfg.dim, cfg.proj_dim, derive_seed(seed, stream)),
        output: glorot_init(cfg.proj_dim, cfg.dim, derive_seed(seed, stream + 1)),
    };
    Ok(ModelParams {
        target: online.clone(),
        online,
        projector,
    })
}

pub fn gcn_forward(stack: &GcnStack, adj: &NormalizedAdjacency, h: &DenseMatrix) -> Result<DenseMatrix> {
    if h.rows() != adj.num_nodes() || h.cols() != stack.input_dim() {
        return Err(Error::Shape {
            op: "gcn_forward",
            lhs: h.shape(),
            rhs: stack.layers[0].shape(),
        });
    }
    let last = stack.layers.len() - 1;
    let mut x = h.clone();
    for (l, w) in stack.layers.iter().enumerate() {
        // (ÂX)W and Â(XW) are equal; multiply by W first when it narrows.
        x = if w.cols() < w.rows() {
            spmm(adj, &x.matmul(w)?)?
        } else {
            spmm(adj, &x)?.matmul(w)?
        };
        if l < last {
            x = x.map(|v| v.max(0.0));
        }
    }
    Ok(x)
}

/// Record the GCN forward on `tape`. `weights` are the tape handles of the
/// layer matrices, in order.
pub fn gcn_forward_tape<'a>(
    tape: &mut Tape<'a>,
    weights: &[Var],
    adj: &'a NormalizedAdjacency,
    h: Var,
) -> Result<Var> {
    let last = weights.len() - 1;
    let mut x = h;
    for (l, &w) in weights.iter().enumerate() {
        let (rows, cols) = tape.value(w).shape();
        x = if cols < rows {
            let xw = tape.matmul(x, w)?;
            tape.spmm(adj, xw)?
        } else {
            let ax = tape.spmm(adj, x)?;
            tape.matmul(ax, w)?
        };
        if l < last {
            x = tape.relu(x);
        }
    }
    Ok(x)
}

pub fn projector_forward(projector: &Projector, h_online: &DenseMatrix) -> Result<DenseMatrix> {
    let hidden = h_online.matmul(&projector.hidden)?.map(|v| v.max(0.0));
    hidden.matmul(&projector.output)
}

pub fn projector_forward_tape(tape: &mut Tape<'_>, hidden: Var, output: Var, h_online: Var) -> Result<Var> {
    let a = tape.matmul(h_online, hidden)?;
    let r = tape.relu(a);
    tape.matmul(r, output)
}

/// `ξ ← τξ + (1−τ)θ` on the GCN stacks.
pub fn ema_update(params: &mut ModelParams, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Invalid(format!("tau {tau} outside [0, 1]")));
    }
    for (xi, theta) in params.target.layers.iter_mut().zip(&params.online.layers) {
        for (x, t) in xi.as_mut_slice().iter_mut().zip(theta.as_slice()) {
            *x = tau * *x + (1.0 - tau) * t;
        }
    }
    Ok(())
}
