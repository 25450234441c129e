use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use igcl::graph::load_graph;
use igcl::train::read_embeddings;

fn igcl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_igcl"))
        .args(args)
        .env("IGCL_THREADS", "1")
        .output()
        .expect("spawn igcl")
}

fn ok(args: &[&str]) -> String {
    let out = igcl(args);
    assert!(
        out.status.success(),
        "igcl {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn make_sbm(dir: &Path) {
    ok(&[
        "sbm", "--blocks", "3", "--per-block", "40", "--p-in", "0.2", "--p-out", "0.01", "--feat-dim", "8",
        "--seed", "3", "--out", s(dir),
    ]);
}

#[test]
fn sbm_container_loads_back() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("sbm");
    let msg = ok(&[
        "sbm", "--blocks", "4", "--per-block", "25", "--p-in", "0.3", "--p-out", "0.02", "--feat-dim", "5",
        "--out", s(&data),
    ]);
    assert!(msg.contains("100 nodes"));
    let g = load_graph(&data).unwrap();
    assert_eq!(g.num_nodes(), 100);
    assert_eq!(g.num_features(), 5);
    assert_eq!(g.num_classes(), 4);
    assert!(fs::read_to_string(data.join("manifest")).unwrap().contains("command=sbm"));
}

#[test]
fn train_embed_probe_sweep_diag() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let data = root.join("data");
    make_sbm(&data);
    let cfg = root.join("cfg");
    fs::write(&cfg, "# small run\nL=1\nD=8\nD_q=16\nK=2\nepochs=20\nseed=1\n").unwrap();
    let run = root.join("run");
    ok(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&run)]);
    for f in ["manifest", "loss.csv", "emb", "checkpoint/meta", "checkpoint/tensors.bin"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let csv = fs::read_to_string(run.join("loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);

    let emb2 = root.join("emb2");
    ok(&["embed", "--checkpoint", s(&run.join("checkpoint")), "--data", s(&data), "--out", s(&emb2)]);
    assert_eq!(read_embeddings(&emb2).unwrap(), read_embeddings(run.join("emb")).unwrap());

    let report = ok(&["probe", "--embeddings", s(&emb2), "--data", s(&data), "--ratios", "0.2,0.2,0.6", "--seed", "5"]);
    let acc: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("accuracy="))
        .expect("accuracy line")
        .parse()
        .unwrap();
    assert!((0.0..=1.0).contains(&acc));

    let sweep_out = root.join("sweep.csv");
    let sweep = ok(&[
        "sweep", "--embeddings", s(&emb2), "--data", s(&data), "--ratios", "0.1,0.3", "--repeats", "3", "--epochs",
        "50", "--out", s(&sweep_out),
    ]);
    assert_eq!(sweep.lines().count(), 3);
    assert_eq!(fs::read_to_string(&sweep_out).unwrap(), sweep);

    let diag = root.join("diag");
    ok(&["diag", "--checkpoint", s(&run.join("checkpoint")), "--data", s(&data), "--out", s(&diag)]);
    let parts = fs::read_to_string(diag.join("partitions.tsv")).unwrap();
    assert!(parts.lines().count() > 120);
    let cc = fs::read_to_string(diag.join("cross_correlation.csv")).unwrap();
    assert_eq!(cc.lines().count(), 8);
    assert!(fs::read_to_string(diag.join("diagnostics.txt")).unwrap().contains("off_diag_redundancy="));
}

#[test]
fn manifest_replay_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let data = root.join("data");
    make_sbm(&data);
    let cfg = root.join("cfg");
    fs::write(&cfg, "L=2\nD=8\nD_q=12\nK=3\nepochs=15\nseed=9\n").unwrap();
    let (a, b) = (root.join("a"), root.join("b"));
    ok(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&a)]);
    ok(&["train", "--manifest", s(&a.join("manifest")), "--out", s(&b)]);
    assert_eq!(fs::read(a.join("loss.csv")).unwrap(), fs::read(b.join("loss.csv")).unwrap());
    assert_eq!(fs::read(a.join("emb")).unwrap(), fs::read(b.join("emb")).unwrap());
}

#[test]
fn unknown_subcommand_fails_with_usage() {
    let out = igcl(&["frobnicate"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn missing_container_reports_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg");
    fs::write(&cfg, "D=4\nD_q=4\nepochs=1\n").unwrap();
    let out = igcl(&[
        "train", "--config", s(&cfg), "--data", s(&tmp.path().join("nope")), "--out", s(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
}

#[test]
fn bad_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    make_sbm(&data);
    let cfg = tmp.path().join("cfg");
    fs::write(&cfg, "D=4\nwidth=3\n").unwrap();
    let out = igcl(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&tmp.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("width"));
}
