//! Edge-recovery and parameter-accuracy metrics: confusion counts over
//! recovered edges, precision/recall/F1, Frobenius error of precisions, and
//! absolute deviation of mixing proportions, all after aligning estimated
//! components to true ones (estimated labels are arbitrary).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::MixtureParams;
use crate::symlin::SymMatrix;

/// Off-diagonal magnitudes above this count as edges. Shared with the
/// degrees-of-freedom count in model selection so the two never disagree.
pub const EDGE_TOL: f64 = 1e-6;

/// Unordered edge pairs (i, j), i < j, with |theta_ij| > tol.
pub fn edge_set(theta: &SymMatrix, tol: f64) -> BTreeSet<(usize, usize)> {
    let mut edges = BTreeSet::new();
    for j in 0..theta.dim() {
        for i in 0..j {
            if theta.get(i, j).abs() > tol {
                edges.insert((i, j));
            }
        }
    }
    edges
}

/// Edge-level confusion counts; `est` is the prediction, `truth` the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub false_neg: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.false_neg == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.false_neg) as f64
        }
    }

    pub fn f1(&self) -> f64 {
        f1_from_rates(self.precision(), self.recall())
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_from_rates(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Confusion counts of `est` against `truth` over the p(p-1)/2 possible edges.
pub fn confusion(
    est: &BTreeSet<(usize, usize)>,
    truth: &BTreeSet<(usize, usize)>,
    p: usize,
) -> Confusion {
    let tp = est.intersection(truth).count();
    let fp = est.len() - tp;
    let false_neg = truth.len() - tp;
    let total = p * (p - 1) / 2;
    Confusion {
        tp,
        fp,
        false_neg,
        tn: total - tp - fp - false_neg,
    }
}

/// Frobenius norm of est - truth over all entries.
pub fn frobenius_error(est: &SymMatrix, truth: &SymMatrix) -> Result<f64> {
    if est.dim() != truth.dim() {
        return Err(Error::DimensionMismatch {
            left: est.dim(),
            right: truth.dim(),
        });
    }
    let p = est.dim();
    let mut acc = 0.0;
    for i in 0..p {
        for j in 0..p {
            let d = est.get(i, j) - truth.get(i, j);
            acc += d * d;
        }
    }
    Ok(acc.sqrt())
}

/// The permutation sigma minimizing total Frobenius error of
/// est.thetas[sigma[k]] against truth.thetas[k], exhaustively over all K!
/// orders; ties keep the lexicographically first permutation.
pub fn align_clusters(est: &MixtureParams, truth: &MixtureParams) -> Result<Vec<usize>> {
    if est.k() != truth.k() {
        return Err(Error::DimensionMismatch {
            left: est.k(),
            right: truth.k(),
        });
    }
    if est.p() != truth.p() {
        return Err(Error::DimensionMismatch {
            left: est.p(),
            right: truth.p(),
        });
    }
    let k = est.k();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut perm: Vec<usize> = (0..k).collect();
    permute_in_lex_order(&mut perm, 0, &mut |candidate| {
        let mut cost = 0.0;
        for (slot, &src) in candidate.iter().enumerate() {
            cost += frobenius_error(&est.thetas[src], &truth.thetas[slot])
                .expect("dims already checked");
        }
        match &best {
            Some((best_cost, _)) if cost >= *best_cost => {}
            _ => best = Some((cost, candidate.to_vec())),
        }
    });
    Ok(best.expect("k >= 1").1)
}

/// Visits permutations of items[at..] in lexicographic order.
fn permute_in_lex_order(items: &mut Vec<usize>, at: usize, visit: &mut impl FnMut(&[usize])) {
    if at == items.len() {
        visit(items);
        return;
    }
    // items[at..] is ascending on entry, so candidates come out in lex order
    let rest: Vec<usize> = items[at..].to_vec();
    for &choice in &rest {
        let tail: Vec<usize> = rest.iter().copied().filter(|&v| v != choice).collect();
        items[at] = choice;
        items[at + 1..].copy_from_slice(&tail);
        permute_in_lex_order(items, at + 1, visit);
    }
    items[at..].copy_from_slice(&rest);
}

/// How per-component absolute deviations of proportions are aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdMode {
    #[default]
    Max,
    Mean,
}

/// Absolute deviation between aligned proportion vectors.
pub fn pi_ad_aligned(
    est_pi: &[f64],
    true_pi: &[f64],
    alignment: &[usize],
    mode: AdMode,
) -> Result<f64> {
    if est_pi.len() != true_pi.len() || alignment.len() != true_pi.len() {
        return Err(Error::DimensionMismatch {
            left: est_pi.len(),
            right: true_pi.len(),
        });
    }
    let devs = alignment
        .iter()
        .enumerate()
        .map(|(slot, &src)| (est_pi[src] - true_pi[slot]).abs());
    Ok(match mode {
        AdMode::Max => devs.fold(0.0, f64::max),
        AdMode::Mean => devs.sum::<f64>() / true_pi.len() as f64,
    })
}

/// Absolute deviation of mixing proportions after aligning components by
/// their precision matrices; the max over components by default.
pub fn pi_ad(est: &MixtureParams, truth: &MixtureParams) -> Result<f64> {
    let alignment = align_clusters(est, truth)?;
    pi_ad_aligned(&est.pi, &truth.pi, &alignment, AdMode::Max)
}

/// Per-component edge recovery after alignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterRecovery {
    #[serde(flatten)]
    pub confusion: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub frobenius: f64,
}

/// Full evaluation of an estimated mixture against the truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub per_cluster: Vec<ClusterRecovery>,
    pub pi_ad: f64,
    /// alignment[k] is the estimated component assigned to true component k.
    pub alignment: Vec<usize>,
}

/// Builds the complete recovery report with edge tolerance `tol`.
pub fn recovery_report(
    est: &MixtureParams,
    truth: &MixtureParams,
    tol: f64,
    ad_mode: AdMode,
) -> Result<RecoveryReport> {
    let alignment = align_clusters(est, truth)?;
    let p = truth.p();
    let mut per_cluster = Vec::with_capacity(truth.k());
    for (slot, &src) in alignment.iter().enumerate() {
        let est_edges = edge_set(&est.thetas[src], tol);
        let true_edges = edge_set(&truth.thetas[slot], tol);
        let conf = confusion(&est_edges, &true_edges, p);
        per_cluster.push(ClusterRecovery {
            confusion: conf,
            precision: conf.precision(),
            recall: conf.recall(),
            f1: conf.f1(),
            frobenius: frobenius_error(&est.thetas[src], &truth.thetas[slot])?,
        });
    }
    let pi_ad = pi_ad_aligned(&est.pi, &truth.pi, &alignment, ad_mode)?;
    Ok(RecoveryReport {
        per_cluster,
        pi_ad,
        alignment,
    })
}
