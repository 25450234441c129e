//! Invariant-discriminative loss and cross-correlation diagnostics.

use crate::error::{Error, Result};
use crate::positive::{standardize, PositivePartition, StandardizedMatrix};
use crate::tensor::{DenseMatrix, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    /// `invariance_term + λ·discrimination_term`.
    pub total: f64,
    pub invariance_term: f64,
    pub discrimination_term: f64,
    /// Invariance of each part; 0 for parts with no participants.
    pub per_part_invariance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    /// `C = Z̄ᵀH̄`.
    pub cross_correlation: DenseMatrix,
    /// `Σ_i (1 − C_ii)²`
    pub on_diag_invariance: f64,
    /// `Σ_{i≠j} C_ij²`
    pub off_diag_redundancy: f64,
    /// `‖Z̄ᵀZ̄ − I‖_F`
    pub gram_identity_error: f64,
}

fn check_pair(z: &DenseMatrix, h: &DenseMatrix, op: &'static str) -> Result<()> {
    if z.shape() != h.shape() {
        return Err(Error::Shape {
            op,
            lhs: z.shape(),
            rhs: h.shape(),
        });
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    Ok(())
}

/// Per-part terms recorded on a tape.
struct PartTerms {
    total: Var,
    invariance: f64,
    discrimination: f64,
}

/// `‖Z − H‖² + λ(‖ZᵀZ − I‖² + ‖HᵀH − I‖²)` with `h` a constant.
fn part_terms(tape: &mut Tape<'_>, z: Var, h: Var, lambda: f64) -> Result<PartTerms> {
    let diff = tape.sub(z, h)?;
    let inv = tape.frob_sq(diff);
    let gz = tape.matmul_tn(z, z)?;
    let gz = tape.sub_identity(gz)?;
    let gz = tape.frob_sq(gz);
    let gh = tape.matmul_tn(h, h)?;
    let gh = tape.sub_identity(gh)?;
    let gh = tape.frob_sq(gh);
    let disc = tape.add(gz, gh)?;
    let weighted = tape.scale(disc, lambda);
    let total = tape.add(inv, weighted)?;
    Ok(PartTerms {
        total,
        invariance: tape.scalar(inv),
        discrimination: tape.scalar(disc),
    })
}

/// Single-positive loss on already standardized inputs.
pub fn id_loss(z_std: &StandardizedMatrix, h_std: &StandardizedMatrix, lambda: f64) -> Result<LossBreakdown> {
    check_pair(z_std.values(), h_std.values(), "id_loss")?;
    check_lambda(lambda)?;
    let mut tape = Tape::new();
    let z = tape.constant(z_std.values().clone());
    let h = tape.constant(h_std.values().clone());
    let t = part_terms(&mut tape, z, h, lambda)?;
    Ok(LossBreakdown {
        total: tape.scalar(t.total),
        invariance_term: t.invariance,
        discrimination_term: t.discrimination,
        per_part_invariance: vec![t.invariance],
    })
}

/// Record the multi-positive loss on `tape`.
///
/// `z_online` is the raw projector output node; `h_target` is the raw
/// target representation and enters as a constant. Both are standardized
/// over all rows once, then each part gathers online rows by positive index
/// and target rows by participating node. Parts with no participants are
/// left out of the average.
pub fn multi_positive_id_loss_tape(
    tape: &mut Tape<'_>,
    z_online: Var,
    h_target: &DenseMatrix,
    parts: &PositivePartition,
    lambda: f64,
) -> Result<(Var, LossBreakdown)> {
    check_pair(tape.value(z_online), h_target, "multi_positive_id_loss")?;
    check_lambda(lambda)?;
    if parts.num_nodes() != h_target.rows() {
        return Err(Error::Invalid(format!(
            "partition covers {} nodes, representations have {} rows",
            parts.num_nodes(),
            h_target.rows()
        )));
    }
    let z_bar = tape.standardize(z_online)?;
    let h_bar = standardize(h_target)?.into_values();

    let mut totals = Vec::with_capacity(parts.k());
    let mut per_part_invariance = Vec::with_capacity(parts.k());
    let (mut inv_sum, mut disc_sum) = (0.0, 0.0);
    for (slot, part) in parts.parts().iter().enumerate() {
        let pairs = part.pairs();
        if pairs.is_empty() {
            per_part_invariance.push(0.0);
            continue;
        }
        let (z, h) = if slot == 0 {
            // Identity part covers every node in order.
            (z_bar, tape.constant(h_bar.clone()))
        } else {
            let targets: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let positives: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let z = tape.gather_rows(z_bar, positives)?;
            let h = tape.constant(h_bar.gather_rows(&targets));
            (z, h)
        };
        let t = part_terms(tape, z, h, lambda)?;
        per_part_invariance.push(t.invariance);
        inv_sum += t.invariance;
        disc_sum += t.discrimination;
        totals.push(t.total);
    }

    let active = totals.len() as f64;
    let mut sum = totals[0];
    for &t in &totals[1..] {
        sum = tape.add(sum, t)?;
    }
    let loss = tape.scale(sum, 1.0 / active);
    let breakdown = LossBreakdown {
        total: tape.scalar(loss),
        invariance_term: inv_sum / active,
        discrimination_term: disc_sum / active,
        per_part_invariance,
    };
    Ok((loss, breakdown))
}

pub fn multi_positive_id_loss(
    z_online: &DenseMatrix,
    h_target: &DenseMatrix,
    parts: &PositivePartition,
    lambda: f64,
) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let z = tape.constant(z_online.clone());
    multi_positive_id_loss_tape(&mut tape, z, h_target, parts, lambda).map(|(_, b)| b)
}

pub fn cross_correlation_diagnostics(
    z_std: &StandardizedMatrix,
    h_std: &StandardizedMatrix,
) -> Result<DiagnosticsReport> {
    let (z, h) = (z_std.values(), h_std.values());
    check_pair(z, h, "cross_correlation_diagnostics")?;
    let c = z.matmul_tn(h)?;
    let d = c.rows();
    let mut on_diag = 0.0;
    let mut off_diag = 0.0;
    for i in 0..d {
        for j in 0..d {
            let v = c.get(i, j);
            if i == j {
                on_diag += (1.0 - v) * (1.0 - v);
            } else {
                off_diag += v * v;
            }
        }
    }
    let mut gram = z.matmul_tn(z)?;
    for i in 0..d {
        gram.set(i, i, gram.get(i, i) - 1.0);
    }
    Ok(DiagnosticsReport {
        cross_correlation: c,
        on_diag_invariance: on_diag,
        off_diag_redundancy: off_diag,
        gram_identity_error: gram.frob_sq().sqrt(),
    })
}
