//! One-degree-of-freedom Cochran-Armitage trend test with additive scores.

use serde::{Deserialize, Serialize};

use crate::inference::chi_square_sf;

/// Genotype counts (0, 1, 2 minor alleles) among cases and controls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenotypeTable {
    pub cases: [u64; 3],
    pub controls: [u64; 3],
}

/// Trend chi-square statistic, or `None` for a degenerate table (an empty
/// group or a monomorphic SNP).
pub fn trend_statistic(table: &GenotypeTable) -> Option<f64> {
    let r: f64 = table.cases.iter().sum::<u64>() as f64;
    let s: f64 = table.controls.iter().sum::<u64>() as f64;
    let n = r + s;
    if r == 0.0 || s == 0.0 {
        return None;
    }
    let mut t = 0.0;
    let mut sum_tn = 0.0;
    let mut sum_t2n = 0.0;
    for g in 0..3 {
        let score = g as f64;
        let cases = table.cases[g] as f64;
        let controls = table.controls[g] as f64;
        t += score * (cases * s - controls * r);
        sum_tn += score * (cases + controls);
        sum_t2n += score * score * (cases + controls);
    }
    let var = r * s / n * (n * sum_t2n - sum_tn * sum_tn);
    if !(var > 0.0) {
        return None;
    }
    Some(t * t / var)
}

/// p-value of the trend test; 1 for degenerate tables.
pub fn assoc_test_1df(table: &GenotypeTable) -> f64 {
    match trend_statistic(table) {
        Some(stat) => chi_square_sf(stat, 1).unwrap_or(1.0),
        None => 1.0,
    }
}
