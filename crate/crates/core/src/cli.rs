//! `igcl` command line: `train`, `embed`, `probe`, `sweep`, `sbm`, `diag`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_config, TrainConfig, CONFIG_KEYS};
use crate::encoder::gcn_forward;
use crate::error::{Error, Result};
use crate::graph::{generate_sbm, load_graph, make_splits, neighbor_sets, normalize_adjacency, write_graph, SbmParams};
use crate::loss::cross_correlation_diagnostics;
use crate::positive::{build_positive_partitions, standardize};
use crate::probe::{label_ratio_sweep, linear_probe, ProbeConfig};
use crate::train::{
    embed, history_csv, load_checkpoint, read_embeddings, save_checkpoint, write_embeddings, Trainer,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "igcl", version, about = "Augmentation-free graph contrastive learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write loss history, embeddings and a checkpoint.
    Train(TrainArgs),
    /// Compute online-encoder embeddings from a checkpoint.
    Embed(EmbedArgs),
    /// Linear-probe embeddings on random train/valid/test splits.
    Probe(ProbeArgs),
    /// Label-ratio sweep with train/test splits.
    Sweep(SweepArgs),
    /// Generate a stochastic-block-model graph container.
    Sbm(SbmArgs),
    /// Dump positive partitions and cross-correlation diagnostics.
    Diag(DiagArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// key=value hyperparameter file.
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    pub config: Option<PathBuf>,
    /// Re-run the configuration and data recorded in a previous manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, required_unless_present = "manifest")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Output embedding file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// train,valid,test fractions.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.1, 0.8])]
    pub ratios: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of random splits (seeds `seed..seed+repeats`).
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Write the report here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 100)]
    pub patience: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Training fractions.
    #[arg(long, value_delimiter = ',', default_values_t = [0.005, 0.01, 0.02, 0.05, 0.1, 0.2])]
    pub ratios: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fixed probe epoch budget per split.
    #[arg(long, default_value_t = 2000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    /// CSV output (ratio,mean,std).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SbmArgs {
    #[arg(long)]
    pub blocks: usize,
    #[arg(long)]
    pub per_block: usize,
    #[arg(long)]
    pub p_in: f64,
    #[arg(long)]
    pub p_out: f64,
    #[arg(long, default_value_t = 32)]
    pub feat_dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub feat_shift: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiagArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Record of one invocation, written before any computation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    pub timestamp: u64,
    pub version: String,
    pub config: Option<TrainConfig>,
    pub args: Vec<String>,
}

impl RunManifest {
    fn new(command: &str, data: Option<&Path>, out: &Path, config: Option<TrainConfig>, args: &[String]) -> Self {
        Self {
            command: command.to_string(),
            data: data.map(Path::to_path_buf),
            out: out.to_path_buf(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            version: VERSION.to_string(),
            config,
            args: args.to_vec(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command={}", self.command);
        if let Some(d) = &self.data {
            let _ = writeln!(s, "data={}", d.display());
        }
        let _ = writeln!(s, "out={}", self.out.display());
        let _ = writeln!(s, "timestamp={}", self.timestamp);
        let _ = writeln!(s, "version={}", self.version);
        for a in &self.args {
            let _ = writeln!(s, "arg={a}");
        }
        if let Some(cfg) = &self.config {
            s.push_str(&cfg.to_text());
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = RunManifest {
            command: String::new(),
            data: None,
            out: PathBuf::new(),
            timestamp: 0,
            version: String::new(),
            config: None,
            args: Vec::new(),
        };
        let mut cfg = TrainConfig::default();
        let mut has_cfg = false;
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Config { line: n + 1, message };
            let (k, v) = line.split_once('=').ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
            match k {
                "command" => m.command = v.to_string(),
                "data" => m.data = Some(PathBuf::from(v)),
                "out" => m.out = PathBuf::from(v),
                "timestamp" => m.timestamp = v.parse().map_err(|_| err(format!("bad timestamp {v:?}")))?,
                "version" => m.version = v.to_string(),
                "arg" => m.args.push(v.to_string()),
                _ if CONFIG_KEYS.contains(&k) => {
                    cfg.set(k, v).map_err(err)?;
                    has_cfg = true;
                }
                _ => return Err(err(format!("unknown manifest key {k:?}"))),
            }
        }
        if has_cfg {
            cfg.validate()?;
            m.config = Some(cfg);
        }
        Ok(m)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join("manifest");
        fs::write(&p, self.to_text()).map_err(|e| Error::io(p, e))
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn labels_of(g: &crate::graph::SparseGraph, data: &Path) -> Result<Vec<u32>> {
    g.labels()
        .map(<[u32]>::to_vec)
        .ok_or_else(|| Error::Invalid(format!("{} has no labels.bin", data.display())))
}

/// Directory that receives the manifest for a command writing to `out`.
fn manifest_dir(out: &Path, out_is_dir: bool) -> PathBuf {
    if out_is_dir {
        out.to_path_buf()
    } else {
        out.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    }
}

fn run_train(a: &TrainArgs, argv: &[String]) -> Result<String> {
    let (cfg, data) = match &a.manifest {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let m = RunManifest::parse(&text)?;
            let cfg = m
                .config
                .ok_or_else(|| Error::Invalid(format!("{} records no training config", path.display())))?;
            let data = a.data.clone().or(m.data).ok_or_else(|| Error::Invalid("manifest has no data path".into()))?;
            (cfg, data)
        }
        None => (
            parse_config(a.config.as_ref().expect("clap enforces --config"))?,
            a.data.clone().expect("clap enforces --data"),
        ),
    };
    RunManifest::new("train", Some(&data), &a.out, Some(cfg), argv).write(&a.out)?;

    let g = load_graph(&data)?;
    let mut trainer = Trainer::new(cfg, &g)?;
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        history.push(trainer.step(g.features())?.record);
    }
    write_file(&a.out.join("loss.csv"), history_csv(&history))?;
    let emb = embed(&trainer.params, &g)?;
    write_embeddings(a.out.join("emb"), &emb)?;
    save_checkpoint(a.out.join("checkpoint"), &cfg, &trainer.params, &trainer.adam, trainer.epoch)?;
    let last = history.last().expect("epochs >= 1");
    Ok(format!(
        "trained {} epochs: loss={:.6} gram_identity_error={:.6} off_diag_redundancy={:.6}\n",
        cfg.epochs, last.loss.total, last.gram_identity_error, last.off_diag_redundancy
    ))
}

fn run_embed(a: &EmbedArgs, argv: &[String]) -> Result<String> {
    RunManifest::new("embed", Some(&a.data), &a.out, None, argv).write(&manifest_dir(&a.out, false))?;
    let ck = load_checkpoint(&a.checkpoint)?;
    let g = load_graph(&a.data)?;
    let emb = embed(&ck.params, &g)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_embeddings(&a.out, &emb)?;
    Ok(format!("wrote {}x{} embeddings\n", emb.rows(), emb.cols()))
}

fn run_probe(a: &ProbeArgs, argv: &[String]) -> Result<String> {
    let out_dir = a.out.as_deref().map(|o| manifest_dir(o, false));
    if let (Some(out), Some(dir)) = (&a.out, &out_dir) {
        RunManifest::new("probe", Some(&a.data), out, None, argv).write(dir)?;
    }
    let ratios: [f64; 3] = a
        .ratios
        .as_slice()
        .try_into()
        .map_err(|_| Error::Invalid("--ratios needs three values".into()))?;
    let emb = read_embeddings(&a.embeddings)?;
    let g = load_graph(&a.data)?;
    let labels = labels_of(&g, &a.data)?;
    let cfg = ProbeConfig {
        lr: a.lr,
        l2: a.l2,
        max_epochs: a.max_epochs,
        patience: a.patience,
    };
    if a.repeats == 0 {
        return Err(Error::Invalid("--repeats must be >= 1".into()));
    }
    let mut report = String::new();
    let mut accs = Vec::with_capacity(a.repeats);
    for r in 0..a.repeats as u64 {
        let split = make_splits(emb.rows(), ratios, a.seed + r)?;
        let res = linear_probe(&emb, &labels, &split, &cfg)?;
        accs.push(res.accuracy);
        if a.repeats == 1 {
            report = res.report();
        } else {
            let _ = writeln!(report, "split_seed={} accuracy={:.6}", res.split_seed, res.accuracy);
        }
    }
    if a.repeats > 1 {
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        let std = (accs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (accs.len() - 1) as f64).sqrt();
        let _ = writeln!(report, "mean_accuracy={mean:.6}\nstd_accuracy={std:.6}");
    }
    if let Some(out) = &a.out {
        write_file(out, &report)?;
    }
    Ok(report)
}

fn run_sweep(a: &SweepArgs, argv: &[String]) -> Result<String> {
    if let Some(out) = &a.out {
        RunManifest::new("sweep", Some(&a.data), out, None, argv).write(&manifest_dir(out, false))?;
    }
    let emb = read_embeddings(&a.embeddings)?;
    let g = load_graph(&a.data)?;
    let labels = labels_of(&g, &a.data)?;
    let cfg = ProbeConfig {
        lr: a.lr,
        l2: a.l2,
        max_epochs: a.epochs,
        patience: a.epochs,
    };
    let rows = label_ratio_sweep(&emb, &labels, &a.ratios, a.repeats, a.seed, &cfg)?;
    let mut csv = String::from("ratio,mean,std\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{:.6},{:.6}", r.ratio, r.mean, r.std);
    }
    if let Some(out) = &a.out {
        write_file(out, &csv)?;
    }
    Ok(csv)
}

fn run_sbm(a: &SbmArgs, argv: &[String]) -> Result<String> {
    RunManifest::new("sbm", None, &a.out, None, argv).write(&a.out)?;
    let g = generate_sbm(&SbmParams {
        blocks: a.blocks,
        nodes_per_block: a.per_block,
        p_in: a.p_in,
        p_out: a.p_out,
        feat_dim: a.feat_dim,
        feat_shift: a.feat_shift,
        seed: a.seed,
    })?;
    write_graph(&g, &a.out)?;
    Ok(format!(
        "wrote {} nodes, {} edges, {} features, {} classes\n",
        g.num_nodes(),
        g.num_edges(),
        g.num_features(),
        g.num_classes()
    ))
}

fn run_diag(a: &DiagArgs, argv: &[String]) -> Result<String> {
    RunManifest::new("diag", Some(&a.data), &a.out, None, argv).write(&a.out)?;
    let ck = load_checkpoint(&a.checkpoint)?;
    let g = load_graph(&a.data)?;
    let adj = normalize_adjacency(&g);
    let h_target = gcn_forward(&ck.params.target, &adj, g.features())?;
    let parts = build_positive_partitions(&h_target, &neighbor_sets(&g), ck.cfg.positives)?;

    let mut text = String::from("node\tk\tpositive\tdistance\n");
    for i in 0..g.num_nodes() {
        for (slot, part) in parts.parts().iter().enumerate() {
            if let (Some(j), Some(d)) = (part.positive(i), part.distance(i)) {
                let _ = writeln!(text, "{i}\t{}\t{j}\t{d:e}", slot + 1);
            }
        }
    }
    write_file(&a.out.join("partitions.tsv"), &text)?;

    let trainer = Trainer::resume(ck.cfg, &g, ck.params.clone(), None, ck.epoch)?;
    let h_online = gcn_forward(&ck.params.online, trainer.adjacency(), g.features())?;
    let z = crate::encoder::projector_forward(&ck.params.projector, &h_online)?;
    let report = cross_correlation_diagnostics(&standardize(&z)?, &standardize(&h_target)?)?;
    let mut csv = String::new();
    for r in 0..report.cross_correlation.rows() {
        let row: Vec<String> = report.cross_correlation.row(r).iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(csv, "{}", row.join(","));
    }
    write_file(&a.out.join("cross_correlation.csv"), &csv)?;
    let summary = format!(
        "on_diag_invariance={:e}\noff_diag_redundancy={:e}\ngram_identity_error={:e}\n",
        report.on_diag_invariance, report.off_diag_redundancy, report.gram_identity_error
    );
    write_file(&a.out.join("diagnostics.txt"), &summary)?;
    Ok(summary)
}

/// Parse `argv` (including the program name) and run the command.
/// Returns the text to print on success.
pub fn dispatch<I, T>(argv: I) -> Result<String, DispatchError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(&argv).map_err(DispatchError::Usage)?;
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let out = match &cli.command {
        Command::Train(a) => run_train(a, &args),
        Command::Embed(a) => run_embed(a, &args),
        Command::Probe(a) => run_probe(a, &args),
        Command::Sweep(a) => run_sweep(a, &args),
        Command::Sbm(a) => run_sbm(a, &args),
        Command::Diag(a) => run_diag(a, &args),
    };
    out.map_err(DispatchError::Run)
}

#[derive(Debug)]
pub enum DispatchError {
    /// Bad arguments, or `--help`/`--version` output.
    Usage(clap::Error),
    Run(Error),
}

impl DispatchError {
    pub fn exit_code(&self) -> i32 {
        match self {
            DispatchError::Usage(e) => e.exit_code(),
            DispatchError::Run(_) => 1,
        }
    }
}

impl std::fmt::Display for DispatchError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DispatchError::Usage(e) => write!(f, "{e}"),
            DispatchError::Run(e) => write!(f, "error: {e}"),
        }
    }
}
