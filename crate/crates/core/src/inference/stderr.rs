//! Standard errors from the empirical observed information matrix
//! `I_e = sum_j s_j s_j^T`, where `s_j` is the expected complete-data score
//! of SNP `j` at the fitted parameters.
//!
//! Score layout: the `2^K - 1` non-null state proportions, then the `K`
//! Beta shapes, then `q[d][l]` annotation-major. The null proportion is
//! omitted (it is one minus the others) and gets its standard error by the
//! delta method.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::em::FitResult;
use crate::error::{GpaError, Result};
use crate::model::{AnnotationMatrix, ModelData, PValueMatrix};
use crate::reduce::chunked_sum;

/// Condition number above which the information matrix is pseudo-inverted.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldEnrichment {
    pub annotation: usize,
    pub state: usize,
    pub reference_state: usize,
    /// `q[annotation][state] / q[annotation][reference_state]`.
    pub ratio: f64,
    pub se: Option<f64>,
}

/// Standard errors; `None` marks a non-estimable entry (parameter at a
/// bound, or not part of the model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StdErrorReport {
    pub se_pi: Vec<Option<f64>>,
    pub se_alpha: Vec<Option<f64>>,
    pub se_q: Vec<Vec<Option<f64>>>,
    pub fold_enrichment: Vec<FoldEnrichment>,
    /// Condition number of the inverted block; `None` when it is singular.
    pub info_matrix_condition: Option<f64>,
    pub pseudo_inverse: bool,
}

fn score_len(n_states: usize, k: usize, d: usize) -> usize {
    n_states - 1 + k + n_states * d
}

fn fill_score(j: usize, fit: &FitResult, data: &ModelData, out: &mut [f64]) {
    let params = &fit.params;
    let n = params.n_states();
    let k = params.n_studies();
    let z = fit.posteriors.row(j);
    let z0 = z[0] / params.pi[0];
    for l in 1..n {
        out[l - 1] = z[l] / params.pi[l] - z0;
    }
    let log_p = data.log_p_row(j);
    for kk in 0..k {
        let w: f64 = (0..n).filter(|l| l >> kk & 1 == 1).map(|l| z[l]).sum();
        out[n - 1 + kk] = w * (log_p[kk] + 1.0 / params.alpha[kk]);
    }
    if let Some(a) = data.annot_row(j) {
        let base = n - 1 + k;
        for (d, &ajd) in a.iter().enumerate() {
            for l in 0..n {
                let q = params.q[d][l];
                out[base + d * n + l] = z[l] * (ajd / q - (1.0 - ajd) / (1.0 - q));
            }
        }
    }
}

fn model_data(fit: &FitResult, pvalues: &PValueMatrix, annotation: Option<&AnnotationMatrix>) -> Result<ModelData> {
    let annotation = if fit.used_annotation {
        Some(annotation.ok_or_else(|| GpaError::Config("fit used annotation; none supplied".into()))?)
    } else {
        None
    };
    let data = ModelData::new(pvalues, annotation)?;
    data.check_params(&fit.params)?;
    if data.n_snps() != fit.posteriors.n_snps() {
        return Err(GpaError::Config("data and posteriors differ in row count".into()));
    }
    Ok(data)
}

/// Expected complete-data score of SNP `j` at the fitted parameters.
pub fn score_vector(
    j: usize,
    fit: &FitResult,
    pvalues: &PValueMatrix,
    annotation: Option<&AnnotationMatrix>,
) -> Result<Vec<f64>> {
    let data = model_data(fit, pvalues, annotation)?;
    if j >= data.n_snps() {
        return Err(GpaError::Config(format!("SNP index {j} out of range")));
    }
    let p = &fit.params;
    let mut s = vec![0.0; score_len(p.n_states(), p.n_studies(), data.n_annotations())];
    fill_score(j, fit, &data, &mut s);
    Ok(s)
}

fn information_from_data(fit: &FitResult, data: &ModelData) -> DMatrix<f64> {
    let p = &fit.params;
    let len = score_len(p.n_states(), p.n_studies(), data.n_annotations());
    let sums = chunked_sum(data.n_snps(), fit.options.chunk_size, len * len, |range, acc| {
        let mut s = vec![0.0; len];
        for j in range {
            fill_score(j, fit, data, &mut s);
            for a in 0..len {
                let sa = s[a];
                if sa == 0.0 {
                    continue;
                }
                for b in a..len {
                    acc[a * len + b] += sa * s[b];
                }
            }
        }
    });
    DMatrix::from_fn(len, len, |a, b| if a <= b { sums[a * len + b] } else { sums[b * len + a] })
}

/// Empirical observed information matrix at the fitted parameters.
pub fn information_matrix(
    fit: &FitResult,
    pvalues: &PValueMatrix,
    annotation: Option<&AnnotationMatrix>,
) -> Result<DMatrix<f64>> {
    let data = model_data(fit, pvalues, annotation)?;
    Ok(information_from_data(fit, &data))
}

fn at_bound(v: f64, (lo, hi): (f64, f64)) -> bool {
    v <= lo * (1.0 + 1e-9) || v >= hi - 1e-12
}

/// Indices of score components whose parameter sits on a projection bound.
fn bounded_components(fit: &FitResult, n_annotations: usize) -> Vec<bool> {
    let p = &fit.params;
    let o = &fit.options;
    let n = p.n_states();
    let k = p.n_studies();
    let pi_bound = |v: f64| v <= 2.0 * o.pi_floor || v <= f64::MIN_POSITIVE;
    let null_bound = pi_bound(p.pi[0]);
    let mut out = vec![false; score_len(n, k, n_annotations)];
    for l in 1..n {
        out[l - 1] = null_bound || pi_bound(p.pi[l]);
    }
    for kk in 0..k {
        out[n - 1 + kk] = at_bound(p.alpha[kk], o.alpha_bounds);
    }
    for d in 0..n_annotations {
        for l in 0..n {
            out[n - 1 + k + d * n + l] = at_bound(p.q[d][l], o.q_bounds);
        }
    }
    out
}

pub fn standard_errors(
    fit: &FitResult,
    pvalues: &PValueMatrix,
    annotation: Option<&AnnotationMatrix>,
) -> Result<StdErrorReport> {
    let data = model_data(fit, pvalues, annotation)?;
    let info = information_from_data(fit, &data);
    let p = &fit.params;
    let n = p.n_states();
    let k = p.n_studies();
    let d_count = data.n_annotations();

    let bounded = bounded_components(fit, d_count);
    let free: Vec<usize> = (0..bounded.len()).filter(|&i| !bounded[i]).collect();
    let sub = DMatrix::from_fn(free.len(), free.len(), |a, b| info[(free[a], free[b])]);

    let (cov_free, condition, pseudo) = if free.is_empty() {
        (DMatrix::zeros(0, 0), 1.0, false)
    } else {
        invert_symmetric(sub)?
    };
    // covariance in the full layout; NaN marks components that were dropped
    let len = bounded.len();
    let mut cov = DMatrix::from_element(len, len, f64::NAN);
    for (a, &ia) in free.iter().enumerate() {
        for (b, &ib) in free.iter().enumerate() {
            cov[(ia, ib)] = cov_free[(a, b)];
        }
    }
    let se_of = |i: usize| -> Option<f64> {
        let v = cov[(i, i)];
        (v.is_finite() && v >= 0.0).then(|| v.sqrt())
    };

    let mut se_pi = Vec::with_capacity(n);
    let pi_free: Vec<usize> = (0..n - 1).filter(|&i| !bounded[i]).collect();
    // se(pi_null) by the delta method with gradient -1 on each free proportion
    let null_se = if bounded[..n - 1].iter().all(|&b| !b) {
        let var: f64 = pi_free.iter().flat_map(|&a| pi_free.iter().map(move |&b| (a, b))).map(|(a, b)| cov[(a, b)]).sum();
        (var >= 0.0).then(|| var.sqrt())
    } else {
        None
    };
    se_pi.push(null_se);
    se_pi.extend((0..n - 1).map(se_of));
    let se_alpha = (0..k).map(|kk| se_of(n - 1 + kk)).collect();
    let q_index = |d: usize, l: usize| n - 1 + k + d * n + l;
    let se_q = (0..d_count)
        .map(|d| (0..n).map(|l| se_of(q_index(d, l))).collect())
        .collect();

    let mut fold_enrichment = Vec::new();
    for d in 0..d_count {
        let q0 = p.q[d][0];
        let i0 = q_index(d, 0);
        for l in 1..n {
            let ql = p.q[d][l];
            let il = q_index(d, l);
            let ratio = ql / q0;
            let var = ratio
                * ratio
                * (cov[(il, il)] / (ql * ql) + cov[(i0, i0)] / (q0 * q0) - 2.0 * cov[(il, i0)] / (ql * q0));
            fold_enrichment.push(FoldEnrichment {
                annotation: d,
                state: l,
                reference_state: 0,
                ratio,
                se: (var.is_finite() && var >= 0.0).then(|| var.sqrt()),
            });
        }
    }

    Ok(StdErrorReport {
        se_pi,
        se_alpha,
        se_q,
        fold_enrichment,
        info_matrix_condition: condition.is_finite().then_some(condition),
        pseudo_inverse: pseudo,
    })
}

/// Inverse (or pseudo-inverse when ill-conditioned) of a symmetric matrix,
/// with its condition number.
fn invert_symmetric(m: DMatrix<f64>) -> Result<(DMatrix<f64>, f64, bool)> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(GpaError::Numerical("information matrix has non-finite entries".into()));
    }
    let eig = SymmetricEigen::new(m);
    let max = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if max <= 0.0 {
        return Err(GpaError::Numerical("information matrix is zero".into()));
    }
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    let pseudo = condition > MAX_CONDITION;
    let cutoff = if pseudo { max / MAX_CONDITION } else { 0.0 };
    let inv_vals = eig.eigenvalues.map(|v| if v > cutoff { 1.0 / v } else { 0.0 });
    let v = &eig.eigenvectors;
    let inv = v * DMatrix::from_diagonal(&inv_vals) * v.transpose();
    Ok((inv, condition, pseudo))
}
