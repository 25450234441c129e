//! Graph container directory: `meta`, `edges.bin`, `features.bin`, `labels.bin`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::SparseGraph;
use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

struct Meta {
    n_nodes: usize,
    n_feats: usize,
    n_classes: usize,
    directed: bool,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn parse_meta(path: &Path) -> Result<Meta> {
    let bytes = read(path)?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| Error::format(path, e.valid_up_to() as u64, "meta is not UTF-8"))?;
    let mut fields = HashMap::new();
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if !trimmed.is_empty() && !trimmed.starts_with('#') {
            let (k, v) = trimmed
                .split_once('=')
                .ok_or_else(|| Error::format(path, offset, format!("expected key=value, got {trimmed:?}")))?;
            let value: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::format(path, offset, format!("bad integer for {}: {v:?}", k.trim())))?;
            fields.insert(k.trim().to_string(), (value, offset));
        }
        offset += line.len() as u64;
    }
    let get = |key: &str| {
        fields
            .get(key)
            .map(|&(v, _)| v)
            .ok_or_else(|| Error::format(path, 0, format!("missing key {key}")))
    };
    let directed = match fields.get("directed") {
        None => false,
        Some(&(0, _)) => false,
        Some(&(1, _)) => true,
        Some(&(other, off)) => {
            return Err(Error::format(path, off, format!("directed must be 0 or 1, got {other}")))
        }
    };
    Ok(Meta {
        n_nodes: get("n_nodes")?,
        n_feats: get("n_feats")?,
        n_classes: fields.get("n_classes").map_or(0, |&(v, _)| v),
        directed,
    })
}

fn u32_at(bytes: &[u8], pos: usize) -> u32 {
    u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap())
}

/// Load and validate a graph container directory.
pub fn load_graph(dir: impl AsRef<Path>) -> Result<SparseGraph> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta");
    let meta = parse_meta(&meta_path)?;
    let n = meta.n_nodes;

    let edges_path = dir.join("edges.bin");
    let raw = read(&edges_path)?;
    if raw.len() % 8 != 0 {
        let off = (raw.len() - raw.len() % 8) as u64;
        return Err(Error::format(&edges_path, off, "trailing bytes after last edge pair"));
    }
    let mut edges = Vec::with_capacity(raw.len() / 8);
    for pos in (0..raw.len()).step_by(8) {
        let u = u32_at(&raw, pos);
        let v = u32_at(&raw, pos + 4);
        if u as usize >= n || v as usize >= n {
            return Err(Error::format(
                &edges_path,
                pos as u64,
                format!("edge ({u}, {v}) out of range for {n} nodes"),
            ));
        }
        edges.push((u, v));
    }

    let feat_path = dir.join("features.bin");
    let raw = read(&feat_path)?;
    let row_bytes = meta.n_feats * 4;
    let expected = n * row_bytes;
    if raw.len() < expected || (row_bytes > 0 && raw.len() % row_bytes != 0) {
        let rows = raw.len().checked_div(row_bytes).unwrap_or(0);
        return Err(Error::format(
            &feat_path,
            (rows * row_bytes) as u64,
            format!("feature rows {rows} != n_nodes {n}"),
        ));
    }
    if raw.len() > expected {
        return Err(Error::format(&feat_path, expected as u64, "trailing bytes after feature matrix"));
    }
    let mut values = Vec::with_capacity(n * meta.n_feats);
    for pos in (0..raw.len()).step_by(4) {
        let v = f32::from_le_bytes(raw[pos..pos + 4].try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::format(&feat_path, pos as u64, "non-finite feature value"));
        }
        values.push(v as f64);
    }
    let features = DenseMatrix::from_vec(n, meta.n_feats, values)?;

    let labels_path = dir.join("labels.bin");
    let labels = if labels_path.exists() {
        let raw = read(&labels_path)?;
        if raw.len() < n * 4 || raw.len() % 4 != 0 {
            return Err(Error::format(
                &labels_path,
                (raw.len() - raw.len() % 4) as u64,
                format!("label count {} != n_nodes {n}", raw.len() / 4),
            ));
        }
        if raw.len() > n * 4 {
            return Err(Error::format(&labels_path, (n * 4) as u64, "trailing bytes after labels"));
        }
        let mut labels = Vec::with_capacity(n);
        for pos in (0..raw.len()).step_by(4) {
            let l = u32_at(&raw, pos);
            if meta.n_classes > 0 && l as usize >= meta.n_classes {
                return Err(Error::format(
                    &labels_path,
                    pos as u64,
                    format!("label {l} >= n_classes {}", meta.n_classes),
                ));
            }
            labels.push(l);
        }
        Some(labels)
    } else {
        None
    };

    SparseGraph::from_edges(n, &edges, features, labels, meta.directed)
}

/// Write `g` as a container directory. Each undirected edge is stored once.
/// Features are narrowed to `f32`.
pub fn write_graph(g: &SparseGraph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, bytes: &[u8]| {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(|e| Error::io(p, e))
    };

    let meta = format!(
        "n_nodes={}\nn_feats={}\nn_classes={}\ndirected={}\n",
        g.num_nodes(),
        g.num_features(),
        g.num_classes(),
        u8::from(g.directed_source())
    );
    write("meta", meta.as_bytes())?;

    let mut edges = Vec::with_capacity(g.num_edges() * 8);
    for (u, v) in g.undirected_edges() {
        edges.extend_from_slice(&u.to_le_bytes());
        edges.extend_from_slice(&v.to_le_bytes());
    }
    write("edges.bin", &edges)?;

    let mut feats = Vec::with_capacity(g.features().len() * 4);
    for &v in g.features().as_slice() {
        feats.extend_from_slice(&(v as f32).to_le_bytes());
    }
    write("features.bin", &feats)?;

    if let Some(labels) = g.labels() {
        let mut buf = Vec::with_capacity(labels.len() * 4);
        for &l in labels {
            buf.extend_from_slice(&l.to_le_bytes());
        }
        write("labels.bin", &buf)?;
    }
    Ok(())
}
