//! Full-batch training: online forward on a tape, target forward, k-NN
//! partitions, multi-positive loss, backward into θ and the projector,
//! Adam, then EMA.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::{TrainConfig, CONFIG_KEYS};
use crate::encoder::{
    ema_update, gcn_forward, gcn_forward_tape, init_siamese, projector_forward_tape, GcnStack, ModelParams, Projector,
};
use crate::error::{Error, Result};
use crate::graph::{neighbor_sets, normalize_adjacency, NormalizedAdjacency, SparseGraph};
use crate::loss::{cross_correlation_diagnostics, multi_positive_id_loss_tape, DiagnosticsReport, LossBreakdown};
use crate::positive::{build_positive_partitions, standardize};
use crate::tensor::checkpoint::Checkpoint;
use crate::tensor::{adam_step, AdamState, DenseMatrix, Tape};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub gram_identity_error: f64,
    pub off_diag_redundancy: f64,
    pub on_diag_invariance: f64,
}

pub const HISTORY_HEADER: &str = "epoch,total,invariance,discrimination,gram_identity_error,off_diag_redundancy";

/// Render the loss history as CSV. Floats use shortest round-trip form.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for r in history {
        let _ = writeln!(
            s,
            "{},{:e},{:e},{:e},{:e},{:e}",
            r.epoch,
            r.loss.total,
            r.loss.invariance_term,
            r.loss.discrimination_term,
            r.gram_identity_error,
            r.off_diag_redundancy
        );
    }
    s
}

/// Mutable training state: parameters, optimizer and epoch counter.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub cfg: TrainConfig,
    pub params: ModelParams,
    pub adam: AdamState,
    pub epoch: usize,
    adj: NormalizedAdjacency,
    neighbors: Vec<Vec<usize>>,
}

/// Values observed during one step, before the parameter update.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub record: EpochRecord,
    pub diagnostics: DiagnosticsReport,
}

fn adam_for(params: &ModelParams) -> AdamState {
    let mut list: Vec<&DenseMatrix> = params.online.layers().iter().collect();
    list.push(&params.projector.hidden);
    list.push(&params.projector.output);
    AdamState::new(&list)
}

impl Trainer {
    pub fn new(cfg: TrainConfig, g: &SparseGraph) -> Result<Self> {
        cfg.validate()?;
        let params = init_siamese(&cfg, g.num_features(), cfg.seed)?;
        Self::resume(cfg, g, params, None, 0)
    }

    /// Continue from saved parameters (and optimizer state, if any).
    pub fn resume(
        cfg: TrainConfig,
        g: &SparseGraph,
        params: ModelParams,
        adam: Option<AdamState>,
        epoch: usize,
    ) -> Result<Self> {
        if params.online.input_dim() != g.num_features() {
            return Err(Error::Shape {
                op: "trainer",
                lhs: (g.num_nodes(), g.num_features()),
                rhs: params.online.layers()[0].shape(),
            });
        }
        let adam = adam.unwrap_or_else(|| adam_for(&params));
        Ok(Self {
            cfg,
            adam,
            params,
            epoch,
            adj: normalize_adjacency(g),
            neighbors: neighbor_sets(g),
        })
    }

    pub fn adjacency(&self) -> &NormalizedAdjacency {
        &self.adj
    }

    /// One full-batch step.
    pub fn step(&mut self, features: &DenseMatrix) -> Result<StepOutput> {
        let epoch = self.epoch;
        let cfg = self.cfg;
        let h_target = gcn_forward(&self.params.target, &self.adj, features)?;
        let parts = build_positive_partitions(&h_target, &self.neighbors, cfg.positives)?;

        let mut tape = Tape::new();
        let x = tape.constant(features.clone());
        let weights: Vec<_> = self.params.online.layers().iter().map(|w| tape.param(w.clone())).collect();
        let w_hidden = tape.param(self.params.projector.hidden.clone());
        let w_out = tape.param(self.params.projector.output.clone());
        let h_online = gcn_forward_tape(&mut tape, &weights, &self.adj, x)?;
        let z_online = projector_forward_tape(&mut tape, w_hidden, w_out, h_online)?;
        let (loss, breakdown) = multi_positive_id_loss_tape(&mut tape, z_online, &h_target, &parts, cfg.lambda)?;
        if !breakdown.total.is_finite() {
            return Err(Error::Diverged { epoch });
        }

        let diagnostics = cross_correlation_diagnostics(
            &standardize(tape.value(z_online))?,
            &standardize(&h_target)?,
        )?;

        let grads = tape.backward(loss)?;
        let zero_like = |m: &DenseMatrix| DenseMatrix::zeros(m.rows(), m.cols());
        let mut grad_list = Vec::with_capacity(weights.len() + 2);
        for &v in weights.iter().chain([&w_hidden, &w_out]) {
            grad_list.push(grads.get(v).cloned().unwrap_or_else(|| zero_like(tape.value(v))));
        }
        drop(tape);

        let grad_refs: Vec<&DenseMatrix> = grad_list.iter().collect();
        let ModelParams { online, projector, .. } = &mut self.params;
        let mut param_refs: Vec<&mut DenseMatrix> = online.layers_mut().iter_mut().collect();
        param_refs.push(&mut projector.hidden);
        param_refs.push(&mut projector.output);
        adam_step(&mut param_refs, &grad_refs, &mut self.adam, cfg.lr, cfg.weight_decay)?;
        ema_update(&mut self.params, cfg.tau)?;
        self.epoch += 1;

        Ok(StepOutput {
            record: EpochRecord {
                epoch,
                gram_identity_error: diagnostics.gram_identity_error,
                off_diag_redundancy: diagnostics.off_diag_redundancy,
                on_diag_invariance: diagnostics.on_diag_invariance,
                loss: breakdown,
            },
            diagnostics,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub adam: AdamState,
    pub history: Vec<EpochRecord>,
}

/// Train for `cfg.epochs` epochs from a fresh Glorot initialization.
pub fn train(cfg: &TrainConfig, g: &SparseGraph) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(*cfg, g)?;
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        history.push(trainer.step(g.features())?.record);
    }
    Ok(TrainOutcome {
        params: trainer.params,
        adam: trainer.adam,
        history,
    })
}

/// Online encoder output `H^θ` (no projector).
pub fn embed(model: &ModelParams, g: &SparseGraph) -> Result<DenseMatrix> {
    gcn_forward(&model.online, &normalize_adjacency(g), g.features())
}

/// Write parameters, optimizer state and config as a tensor checkpoint.
pub fn save_checkpoint(
    dir: impl AsRef<Path>,
    cfg: &TrainConfig,
    params: &ModelParams,
    adam: &AdamState,
    epoch: usize,
) -> Result<()> {
    let mut fields = vec![
        ("seed".to_string(), cfg.seed.to_string()),
        ("epoch".to_string(), epoch.to_string()),
        ("adam_step".to_string(), adam.step.to_string()),
        ("adam_beta1".to_string(), adam.beta1.to_string()),
        ("adam_beta2".to_string(), adam.beta2.to_string()),
        ("adam_eps".to_string(), adam.eps.to_string()),
    ];
    for key in CONFIG_KEYS {
        fields.push((format!("cfg.{key}"), cfg.get(key).unwrap()));
    }
    let mut tensors = Vec::new();
    for (l, w) in params.online.layers().iter().enumerate() {
        tensors.push((format!("online.{l}"), w.clone()));
    }
    for (l, w) in params.target.layers().iter().enumerate() {
        tensors.push((format!("target.{l}"), w.clone()));
    }
    tensors.push(("projector.hidden".to_string(), params.projector.hidden.clone()));
    tensors.push(("projector.output".to_string(), params.projector.output.clone()));
    for (i, m) in adam.m.iter().enumerate() {
        tensors.push((format!("adam.m.{i}"), m.clone()));
    }
    for (i, v) in adam.v.iter().enumerate() {
        tensors.push((format!("adam.v.{i}"), v.clone()));
    }
    Checkpoint { fields, tensors }.write(dir)
}

#[derive(Debug, Clone)]
pub struct LoadedCheckpoint {
    pub cfg: TrainConfig,
    pub params: ModelParams,
    pub adam: AdamState,
    pub epoch: usize,
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<LoadedCheckpoint> {
    let dir = dir.as_ref();
    let ck = Checkpoint::read(dir)?;
    let bad = |msg: String| Error::format(dir.join("meta"), 0, msg);
    let field = |key: &str| ck.field(key).ok_or_else(|| bad(format!("missing field {key}")));
    let parse_f = |key: &str| -> Result<f64> {
        field(key)?.parse().map_err(|_| bad(format!("bad value for {key}")))
    };
    let mut cfg = TrainConfig::default();
    for key in CONFIG_KEYS {
        cfg.set(key, field(&format!("cfg.{key}"))?).map_err(bad)?;
    }
    cfg.validate()?;
    let tensor = |name: &str| ck.tensor(name).cloned().ok_or_else(|| bad(format!("missing tensor {name}")));
    let online = GcnStack::new((0..cfg.layers).map(|l| tensor(&format!("online.{l}"))).collect::<Result<_>>()?)?;
    let target = GcnStack::new((0..cfg.layers).map(|l| tensor(&format!("target.{l}"))).collect::<Result<_>>()?)?;
    let params = ModelParams {
        online,
        target,
        projector: Projector {
            hidden: tensor("projector.hidden")?,
            output: tensor("projector.output")?,
        },
    };
    let slots = cfg.layers + 2;
    let adam = AdamState {
        m: (0..slots).map(|i| tensor(&format!("adam.m.{i}"))).collect::<Result<_>>()?,
        v: (0..slots).map(|i| tensor(&format!("adam.v.{i}"))).collect::<Result<_>>()?,
        step: field("adam_step")?.parse().map_err(|_| bad("bad adam_step".into()))?,
        beta1: parse_f("adam_beta1")?,
        beta2: parse_f("adam_beta2")?,
        eps: parse_f("adam_eps")?,
    };
    let epoch = field("epoch")?.parse().map_err(|_| bad("bad epoch".into()))?;
    Ok(LoadedCheckpoint {
        cfg,
        params,
        adam,
        epoch,
    })
}

/// Embedding file: a text line `N,D` followed by `N·D` little-endian `f64`
/// values in row-major order.
pub fn write_embeddings(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut buf = format!("{},{}\n", m.rows(), m.cols()).into_bytes();
    for v in m.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(path, 0, "missing N,D header line"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::format(path, 0, "header is not UTF-8"))?;
    let (n, d) = header
        .split_once(',')
        .and_then(|(a, b)| Some((a.trim().parse::<usize>().ok()?, b.trim().parse::<usize>().ok()?)))
        .ok_or_else(|| Error::format(path, 0, format!("bad header {header:?}")))?;
    let body = &bytes[nl + 1..];
    if body.len() != n * d * 8 {
        return Err(Error::format(
            path,
            (nl + 1 + body.len().min(n * d * 8)) as u64,
            format!("expected {} payload bytes, found {}", n * d * 8, body.len()),
        ));
    }
    let data = body.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    DenseMatrix::from_vec(n, d, data).map_err(|e| Error::format(path, (nl + 1) as u64, e.to_string()))
}
