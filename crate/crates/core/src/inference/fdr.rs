//! Local false discovery rates and global FDR control by the direct
//! posterior probability approach.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::em::FitResult;
use crate::error::{GpaError, Result};
use crate::model::PosteriorMatrix;

/// Posterior probability that each SNP is null for `study`: the sum of the
/// posteriors of every state whose bit for that study is zero.
pub fn local_fdr_from_posteriors(posteriors: &PosteriorMatrix, study: usize) -> Result<Vec<f64>> {
    let n = posteriors.n_states();
    if n < 2 || (1usize << study) >= n {
        return Err(GpaError::Config(format!("study index {study} out of range")));
    }
    Ok(posteriors
        .values
        .rows()
        .into_iter()
        .map(|row| {
            let f: f64 = row
                .iter()
                .enumerate()
                .filter(|(l, _)| l >> study & 1 == 0)
                .map(|(_, z)| z)
                .sum();
            f.clamp(0.0, 1.0)
        })
        .collect())
}

pub fn local_fdr(fit: &FitResult, study: usize) -> Result<Vec<f64>> {
    local_fdr_from_posteriors(&fit.posteriors, study)
}

/// Declarations for one study at a global FDR bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdrDecision {
    /// Largest declared local fdr; `None` when nothing is declared.
    pub threshold_kappa: Option<f64>,
    pub decisions: Vec<bool>,
    /// Mean local fdr of the declared set (0 when empty).
    pub realized_global_fdr: f64,
    pub n_declared: usize,
}

/// Declares the largest set of smallest local fdrs whose mean is at most
/// `tau`. SNPs tied at the threshold are either all in or all out.
pub fn global_fdr_decisions(local_fdr: &[f64], tau: f64) -> Result<FdrDecision> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(GpaError::Config(format!("tau must lie in (0, 1), got {tau}")));
    }
    if local_fdr.iter().any(|f| f.is_nan()) {
        return Err(GpaError::Numerical("local fdr contains NaN".into()));
    }
    let mut sorted = local_fdr.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));

    let mut running = 0.0;
    let mut best: Option<(usize, f64)> = None;
    for (i, &f) in sorted.iter().enumerate() {
        running += f;
        let group_end = i + 1 == sorted.len() || sorted[i + 1] != f;
        if !group_end {
            continue;
        }
        let mean = running / (i + 1) as f64;
        if mean <= tau {
            best = Some((i + 1, mean));
        } else {
            // sorted input: the running mean never decreases
            break;
        }
    }
    Ok(match best {
        Some((count, mean)) => {
            let kappa = sorted[count - 1];
            let decisions: Vec<bool> = local_fdr.iter().map(|&f| f <= kappa).collect();
            FdrDecision {
                threshold_kappa: Some(kappa),
                n_declared: count,
                decisions,
                realized_global_fdr: mean,
            }
        }
        None => FdrDecision {
            threshold_kappa: None,
            decisions: vec![false; local_fdr.len()],
            realized_global_fdr: 0.0,
            n_declared: 0,
        },
    })
}

/// Per-study local fdrs and declarations for a fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct FdrReport {
    pub local_fdr: Array2<f64>,
    pub threshold_kappa: Vec<Option<f64>>,
    pub decisions: Array2<bool>,
    pub realized_global_fdr: Vec<f64>,
    pub tau: f64,
}

pub fn fdr_report(fit: &FitResult, tau: f64) -> Result<FdrReport> {
    fdr_report_from_posteriors(&fit.posteriors, fit.n_studies(), tau)
}

pub fn fdr_report_from_posteriors(posteriors: &PosteriorMatrix, n_studies: usize, tau: f64) -> Result<FdrReport> {
    let m = posteriors.n_snps();
    let mut local = Array2::zeros((m, n_studies));
    let mut decisions = Array2::from_elem((m, n_studies), false);
    let mut kappa = Vec::with_capacity(n_studies);
    let mut realized = Vec::with_capacity(n_studies);
    for k in 0..n_studies {
        let f = local_fdr_from_posteriors(posteriors, k)?;
        let d = global_fdr_decisions(&f, tau)?;
        for j in 0..m {
            local[[j, k]] = f[j];
            decisions[[j, k]] = d.decisions[j];
        }
        kappa.push(d.threshold_kappa);
        realized.push(d.realized_global_fdr);
    }
    Ok(FdrReport {
        local_fdr: local,
        threshold_kappa: kappa,
        decisions,
        realized_global_fdr: realized,
        tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn post(rows: &[&[f64]]) -> PosteriorMatrix {
        PosteriorMatrix {
            values: Array2::from_shape_fn((rows.len(), rows[0].len()), |(j, l)| rows[j][l]),
        }
    }

    #[test]
    fn local_fdr_examples() {
        let z = post(&[&[1.0 / 6.0, 5.0 / 6.0]]);
        assert!((local_fdr_from_posteriors(&z, 0).unwrap()[0] - 1.0 / 6.0).abs() < 1e-15);

        let z = post(&[&[1.0, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0]]);
        assert_eq!(local_fdr_from_posteriors(&z, 1).unwrap(), vec![1.0, 1.0]);

        let z = post(&[&[0.1, 0.2, 0.3, 0.4]]);
        assert!((local_fdr_from_posteriors(&z, 0).unwrap()[0] - 0.4).abs() < 1e-15);
        assert!((local_fdr_from_posteriors(&z, 1).unwrap()[0] - 0.3).abs() < 1e-15);
        assert!(local_fdr_from_posteriors(&z, 2).is_err());
    }

    #[test]
    fn decision_examples() {
        let d = global_fdr_decisions(&[0.01, 0.05, 0.2], 0.1).unwrap();
        assert_eq!(d.decisions, vec![true, true, true]);
        assert!((d.realized_global_fdr - 0.26 / 3.0).abs() < 1e-15);
        assert_eq!(d.threshold_kappa, Some(0.2));

        let d = global_fdr_decisions(&[0.5, 0.9], 0.1).unwrap();
        assert_eq!(d.n_declared, 0);
        assert_eq!(d.realized_global_fdr, 0.0);
        assert_eq!(d.threshold_kappa, None);

        let d = global_fdr_decisions(&[0.0; 5], 0.05).unwrap();
        assert_eq!(d.n_declared, 5);
        assert_eq!(d.realized_global_fdr, 0.0);

        assert!(global_fdr_decisions(&[0.1], 1.0).is_err());
    }

    #[test]
    fn ties_at_threshold_are_all_or_nothing() {
        // 0.0, 0.3, 0.3: including one 0.3 gives mean 0.15 <= 0.16, but both
        // give 0.2 > 0.16, so only the first SNP is declared.
        let d = global_fdr_decisions(&[0.3, 0.0, 0.3], 0.16).unwrap();
        assert_eq!(d.decisions, vec![false, true, false]);
        let d = global_fdr_decisions(&[0.3, 0.0, 0.3], 0.2).unwrap();
        assert_eq!(d.decisions, vec![true, true, true]);
    }

    proptest! {
        #[test]
        fn declared_sets_are_monotone_and_controlled(
            fdrs in proptest::collection::vec(0.0f64..=1.0, 1..200),
            tau in 0.01f64..0.99,
        ) {
            let d = global_fdr_decisions(&fdrs, tau).unwrap();
            if d.n_declared > 0 {
                prop_assert!(d.realized_global_fdr <= tau);
                let declared: Vec<f64> = fdrs.iter().zip(&d.decisions).filter(|(_, &x)| x).map(|(f, _)| *f).collect();
                let mean = declared.iter().sum::<f64>() / declared.len() as f64;
                prop_assert!((mean - d.realized_global_fdr).abs() < 1e-12);
            }
            for (a, da) in fdrs.iter().zip(&d.decisions) {
                for (b, db) in fdrs.iter().zip(&d.decisions) {
                    if a <= b && *db {
                        prop_assert!(*da);
                    }
                }
            }
        }
    }
}
