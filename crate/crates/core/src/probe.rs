//! Linear evaluation: multinomial logistic regression on frozen
//! embeddings, and label-ratio sweeps.

use std::fmt::Write as _;

use crate::encoder::derive_seed;
use crate::error::{Error, Result};
use crate::graph::{make_splits, SplitAssignment};
use crate::tensor::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub lr: f64,
    pub l2: f64,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            l2: 1e-4,
            max_epochs: 2000,
            patience: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    /// Test accuracy at the best-validation checkpoint.
    pub accuracy: f64,
    /// Test accuracy per class; `None` for classes absent from the test set.
    pub per_class: Vec<Option<f64>>,
    pub split_seed: u64,
    /// `(D, C)` of the classifier weight matrix.
    pub weights_shape: (usize, usize),
    pub best_epoch: usize,
    pub best_valid_accuracy: f64,
}

impl ProbeResult {
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "accuracy={:.6}", self.accuracy);
        let _ = writeln!(s, "split_seed={}", self.split_seed);
        let _ = writeln!(s, "best_epoch={}", self.best_epoch);
        let _ = writeln!(s, "best_valid_accuracy={:.6}", self.best_valid_accuracy);
        for (c, acc) in self.per_class.iter().enumerate() {
            match acc {
                Some(a) => {
                    let _ = writeln!(s, "class_{c}={a:.6}");
                }
                None => {
                    let _ = writeln!(s, "class_{c}=n/a");
                }
            }
        }
        s
    }
}

/// Z-score each column over all nodes; constant columns become zero.
fn normalize_features(x: &DenseMatrix) -> DenseMatrix {
    let (n, d) = x.shape();
    let mut out = x.clone();
    for c in 0..d {
        let col = x.column(c);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        for r in 0..n {
            let v = if sd > 0.0 { (x.get(r, c) - mean) / sd } else { 0.0 };
            out.set(r, c, v);
        }
    }
    out
}

struct Classifier {
    weights: DenseMatrix,
    bias: Vec<f64>,
}

impl Classifier {
    fn new(dim: usize, classes: usize) -> Self {
        Self {
            weights: DenseMatrix::zeros(dim, classes),
            bias: vec![0.0; classes],
        }
    }

    fn logits(&self, x: &DenseMatrix) -> DenseMatrix {
        let mut z = x.matmul(&self.weights).expect("probe shapes");
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        z
    }

    fn predict(&self, x: &DenseMatrix) -> Vec<usize> {
        let z = self.logits(x);
        (0..z.rows())
            .map(|r| {
                let row = z.row(r);
                // First maximum wins on ties.
                let mut best = 0;
                for (c, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }

    /// One gradient-descent step on mean cross-entropy plus `l2/2·‖W‖²`.
    fn step(&mut self, x: &DenseMatrix, y: &[usize], cfg: &ProbeConfig) {
        let n = x.rows() as f64;
        let mut p = self.logits(x);
        for (r, &label) in y.iter().enumerate() {
            let row = p.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
            row[label] -= 1.0;
        }
        let grad_w = x.matmul_tn(&p).expect("probe shapes");
        for (w, g) in self.weights.as_mut_slice().iter_mut().zip(grad_w.as_slice()) {
            *w -= cfg.lr * (g / n + cfg.l2 * *w);
        }
        for c in 0..self.bias.len() {
            let g: f64 = (0..p.rows()).map(|r| p.get(r, c)).sum();
            self.bias[c] -= cfg.lr * g / n;
        }
    }
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

fn select(x: &DenseMatrix, labels: &[u32], idx: &[usize]) -> (DenseMatrix, Vec<usize>) {
    (x.gather_rows(idx), idx.iter().map(|&i| labels[i] as usize).collect())
}

fn check_labels(embeddings: &DenseMatrix, labels: &[u32]) -> Result<usize> {
    if labels.len() != embeddings.rows() {
        return Err(Error::Invalid(format!(
            "{} labels for {} embedding rows",
            labels.len(),
            embeddings.rows()
        )));
    }
    Ok(labels.iter().max().map_or(0, |&m| m as usize + 1))
}

/// Full-batch logistic regression on `split.train`, early-stopped on
/// validation accuracy; reports test accuracy at the best validation epoch.
pub fn linear_probe(
    embeddings: &DenseMatrix,
    labels: &[u32],
    split: &SplitAssignment,
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    let classes = check_labels(embeddings, labels)?;
    let n = embeddings.rows();
    if let Some(&bad) = split.train.iter().chain(&split.valid).chain(&split.test).find(|&&i| i >= n) {
        return Err(Error::Invalid(format!("split index {bad} >= {n}")));
    }
    let x = normalize_features(embeddings);
    let (x_train, y_train) = select(&x, labels, &split.train);
    let (x_valid, y_valid) = select(&x, labels, &split.valid);
    let (x_test, y_test) = select(&x, labels, &split.test);
    let mut distinct = y_train.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Invalid(format!(
            "training set has {} class(es); need at least 2",
            distinct.len()
        )));
    }

    let mut clf = Classifier::new(x.cols(), classes);
    let mut best = (f64::NEG_INFINITY, 0usize, clf.weights.clone(), clf.bias.clone());
    for epoch in 0..cfg.max_epochs {
        clf.step(&x_train, &y_train, cfg);
        let val = accuracy(&clf.predict(&x_valid), &y_valid);
        if val > best.0 {
            best = (val, epoch, clf.weights.clone(), clf.bias.clone());
        } else if epoch - best.1 >= cfg.patience {
            break;
        }
    }
    let (best_valid, best_epoch, weights, bias) = best;
    clf.weights = weights;
    clf.bias = bias;
    let pred = clf.predict(&x_test);

    let mut correct = vec![0usize; classes];
    let mut total = vec![0usize; classes];
    for (&p, &t) in pred.iter().zip(&y_test) {
        total[t] += 1;
        if p == t {
            correct[t] += 1;
        }
    }
    Ok(ProbeResult {
        accuracy: accuracy(&pred, &y_test),
        per_class: correct
            .iter()
            .zip(&total)
            .map(|(&c, &t)| (t > 0).then(|| c as f64 / t as f64))
            .collect(),
        split_seed: split.seed,
        weights_shape: (x.cols(), classes),
        best_epoch,
        best_valid_accuracy: best_valid.max(0.0),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub ratio: f64,
    pub mean: f64,
    pub std: f64,
    pub accuracies: Vec<f64>,
}

/// For each train ratio, `repeats` random train/test splits (no validation)
/// and a probe trained for the full `cfg.max_epochs`.
pub fn label_ratio_sweep(
    embeddings: &DenseMatrix,
    labels: &[u32],
    ratios: &[f64],
    repeats: usize,
    seed: u64,
    cfg: &ProbeConfig,
) -> Result<Vec<SweepRow>> {
    let classes = check_labels(embeddings, labels)?;
    if repeats == 0 {
        return Err(Error::Invalid("repeats must be >= 1".into()));
    }
    let x = normalize_features(embeddings);
    let n = x.rows();
    let mut rows = Vec::with_capacity(ratios.len());
    for (ri, &ratio) in ratios.iter().enumerate() {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::Invalid(format!("ratio {ratio} outside (0, 1)")));
        }
        let mut accs = Vec::with_capacity(repeats);
        for rep in 0..repeats {
            let split_seed = derive_seed(seed, ((ri as u64) << 32) | rep as u64);
            let split = make_splits(n, [ratio, 0.0, 1.0 - ratio], split_seed)?;
            if split.train.is_empty() {
                return Err(Error::Invalid(format!("ratio {ratio} leaves no training nodes out of {n}")));
            }
            let (x_train, y_train) = select(&x, labels, &split.train);
            let (x_test, y_test) = select(&x, labels, &split.test);
            let mut clf = Classifier::new(x.cols(), classes);
            for _ in 0..cfg.max_epochs {
                clf.step(&x_train, &y_train, cfg);
            }
            accs.push(accuracy(&clf.predict(&x_test), &y_test));
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        let std = if accs.len() > 1 {
            (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (accs.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        rows.push(SweepRow {
            ratio,
            mean,
            std,
            accuracies: accs,
        });
    }
    Ok(rows)
}
