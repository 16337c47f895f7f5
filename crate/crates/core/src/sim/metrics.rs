//! Prioritization metrics against simulated truth.

use serde::{Deserialize, Serialize};

use crate::error::{GpaError, Result};
use crate::inference::global_fdr_decisions;

/// Area under the ROC curve when smaller scores (local fdr) mark stronger
/// calls: the fraction of (causal, non-causal) pairs in which the causal SNP
/// scores lower, ties counting one half.
pub fn auc(scores: &[f64], truth: &[bool]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(GpaError::Config("scores and truth differ in length".into()));
    }
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(GpaError::Data("AUC needs both causal and non-causal SNPs".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(GpaError::Data("scores contain NaN".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // rank sum of the non-causal SNPs with averaged ranks for ties
    let mut rank_sum_neg = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        let negs = order[i..=j].iter().filter(|&&idx| !truth[idx]).count();
        rank_sum_neg += avg_rank * negs as f64;
        i = j + 1;
    }
    let n_neg = n_neg as f64;
    let u = rank_sum_neg - n_neg * (n_neg + 1.0) / 2.0;
    Ok(u / (n_pos as f64 * n_neg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFdr {
    pub power: f64,
    pub realized_fdr: f64,
    pub n_declared: usize,
}

pub fn power_from_decisions(decisions: &[bool], truth: &[bool]) -> Result<PowerFdr> {
    if decisions.len() != truth.len() {
        return Err(GpaError::Config("decisions and truth differ in length".into()));
    }
    let causal = truth.iter().filter(|&&t| t).count();
    let declared = decisions.iter().filter(|&&d| d).count();
    let hits = decisions.iter().zip(truth).filter(|(&d, &t)| d && t).count();
    Ok(PowerFdr {
        power: if causal > 0 { hits as f64 / causal as f64 } else { 0.0 },
        realized_fdr: (declared - hits) as f64 / declared.max(1) as f64,
        n_declared: declared,
    })
}

/// Power and realized false discovery proportion when declaring SNPs at
/// global FDR `tau`.
pub fn power_and_fdr(local_fdr: &[f64], truth: &[bool], tau: f64) -> Result<PowerFdr> {
    let d = global_fdr_decisions(local_fdr, tau)?;
    power_from_decisions(&d.decisions, truth)
}
