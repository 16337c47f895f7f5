//! Expectation-maximization fitting of the GPA mixture.
//!
//! Every M-step has a closed form. The independence-constrained variant
//! (`constrained_null`) replaces the free state proportions of a two-study
//! model by the product of two marginal association rates, which is the
//! null hypothesis of the pleiotropy test.

use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GpaError, Result};
use crate::inference::StdErrorReport;
use crate::model::{
    log_sum_exp, AnnotationMatrix, GpaParams, ModelData, PValueMatrix, PosteriorMatrix, StateTerms,
};
use crate::reduce::{chunked_sum, pairwise_combine, DEFAULT_CHUNK_SIZE};

/// Per-step slack allowed when checking that the log-likelihood never decreases.
pub const ASCENT_SLACK: f64 = 1e-8;

static ASCENT_VIOLATIONS: AtomicUsize = AtomicUsize::new(0);

/// Number of log-likelihood decreases seen by every fit in this process.
pub fn ascent_violations_total() -> usize {
    ASCENT_VIOLATIONS.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "params", rename_all = "snake_case")]
pub enum InitSpec {
    Default,
    Explicit(GpaParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmOptions {
    pub max_iters: usize,
    /// Convergence threshold on `|delta loglik| / (|loglik| + 1)`.
    pub tol: f64,
    pub alpha_bounds: (f64, f64),
    pub q_bounds: (f64, f64),
    pub pi_floor: f64,
    pub init: InitSpec,
    pub seed: Option<u64>,
    /// Rows per reduction chunk; fixes the floating-point summation order.
    pub chunk_size: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            tol: 1e-6,
            alpha_bounds: (1e-6, 1.0 - 1e-6),
            q_bounds: (1e-6, 1.0 - 1e-6),
            pi_floor: 1e-8,
            init: InitSpec::Default,
            seed: None,
            chunk_size: DEFAULT_CHUNK_SIZE,
        }
    }
}

impl EmOptions {
    pub fn validate(&self) -> Result<()> {
        let nested = |(lo, hi): (f64, f64)| lo > 0.0 && lo < hi && hi < 1.0;
        if !nested(self.alpha_bounds) || !nested(self.q_bounds) {
            return Err(GpaError::Config("parameter bounds must be nested in (0, 1)".into()));
        }
        if !(self.tol > 0.0) {
            return Err(GpaError::Config("tolerance must be positive".into()));
        }
        if !(self.pi_floor >= 0.0 && self.pi_floor < 0.01) {
            return Err(GpaError::Config("pi floor must lie in [0, 0.01)".into()));
        }
        if self.chunk_size == 0 {
            return Err(GpaError::Config("chunk size must be positive".into()));
        }
        Ok(())
    }
}

/// Counters for guarded M-step updates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Iterations in which alpha_k was held because study k had no non-null mass.
    pub alpha_held: Vec<usize>,
    /// Number of (iteration, annotation, state) updates that fell back to the column mean.
    pub q_held: usize,
    pub ascent_violations: usize,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: GpaParams,
    pub loglik_trace: Vec<f64>,
    pub posteriors: PosteriorMatrix,
    pub std_errors: Option<StdErrorReport>,
    pub converged: bool,
    pub iterations: usize,
    pub used_annotation: bool,
    pub constrained_null: bool,
    pub diagnostics: FitDiagnostics,
    pub options: EmOptions,
}

impl FitResult {
    /// Log-likelihood at the returned parameters.
    pub fn loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace holds the initial evaluation")
    }

    pub fn n_studies(&self) -> usize {
        self.params.n_studies()
    }
}

fn project(v: f64, (lo, hi): (f64, f64)) -> f64 {
    v.clamp(lo, hi)
}

pub fn initialize(
    pvalues: &PValueMatrix,
    annotation: Option<&AnnotationMatrix>,
    opts: &EmOptions,
) -> Result<GpaParams> {
    let data = ModelData::new(pvalues, annotation)?;
    initialize_data(&data, opts)
}

fn initialize_data(data: &ModelData, opts: &EmOptions) -> Result<GpaParams> {
    match &opts.init {
        InitSpec::Explicit(params) => {
            params.validate()?;
            data.check_params(params)?;
            Ok(params.clone())
        }
        InitSpec::Default => {
            let n = 1usize << data.n_studies();
            let mut pi = vec![0.1 / (n - 1) as f64; n];
            pi[0] = 0.9;
            let q = column_means(data)
                .into_iter()
                .map(|m| vec![project(m, opts.q_bounds); n])
                .collect();
            Ok(GpaParams {
                pi,
                alpha: vec![0.5; data.n_studies()],
                q,
            })
        }
    }
}

fn column_means(data: &ModelData) -> Vec<f64> {
    match &data.annot {
        Some(a) => a
            .columns()
            .into_iter()
            .map(|c| c.sum() / c.len() as f64)
            .collect(),
        None => Vec::new(),
    }
}

pub fn e_step(
    pvalues: &PValueMatrix,
    annotation: Option<&AnnotationMatrix>,
    params: &GpaParams,
) -> Result<PosteriorMatrix> {
    let data = ModelData::new(pvalues, annotation)?;
    data.check_params(params)?;
    Ok(e_step_data(&data, params, DEFAULT_CHUNK_SIZE)?.0)
}

/// Posteriors and the log-likelihood at `params`, in one pass.
pub(crate) fn e_step_data(
    data: &ModelData,
    params: &GpaParams,
    chunk_size: usize,
) -> Result<(PosteriorMatrix, f64)> {
    let params = if data.has_annotation() {
        params.clone()
    } else {
        params.without_annotation()
    };
    let n = params.n_states();
    let m = data.n_snps();
    let terms = StateTerms::new(&params);
    let mut z = Array2::<f64>::zeros((m, n));
    let partials: Vec<Vec<f64>> = z
        .as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(chunk_size * n)
        .enumerate()
        .map(|(c, block)| {
            let mut acc = 0.0;
            for (i, row) in block.chunks_mut(n).enumerate() {
                let j = c * chunk_size + i;
                terms.state_logliks(data.log_p_row(j), data.annot_row(j), row);
                for (r, lp) in row.iter_mut().zip(&terms.log_pi) {
                    *r += lp;
                }
                let lse = log_sum_exp(row);
                for r in row.iter_mut() {
                    *r = (*r - lse).exp();
                }
                acc += lse;
            }
            vec![acc]
        })
        .collect();
    let loglik = pairwise_combine(partials, 1)[0];
    if !loglik.is_finite() || z.iter().any(|v| !v.is_finite()) {
        let row = data
            .first_nonfinite_row(&params)
            .map(|j| format!(" at SNP row {j}"))
            .unwrap_or_default();
        return Err(GpaError::Numerical(format!("non-finite log-likelihood{row}")));
    }
    Ok((PosteriorMatrix { values: z }, loglik))
}

/// Posterior-weighted sums that feed every M-step.
struct SufficientStats {
    state_mass: Vec<f64>,
    alpha_num: Vec<f64>,
    alpha_den: Vec<f64>,
    annot_mass: Vec<Vec<f64>>,
}

fn sufficient_stats(
    z: &PosteriorMatrix,
    log_p: Option<&Array2<f64>>,
    annot: Option<&Array2<f64>>,
    chunk_size: usize,
) -> SufficientStats {
    let n = z.n_states();
    let k = log_p.map_or(0, |lp| lp.ncols());
    let d = annot.map_or(0, |a| a.ncols());
    let width = n + 2 * k + d * n;
    let zs = z.values.as_slice().expect("standard layout");
    let sums = chunked_sum(z.n_snps(), chunk_size, width, |range, acc| {
        for j in range {
            let zr = &zs[j * n..(j + 1) * n];
            for (a, v) in acc[..n].iter_mut().zip(zr) {
                *a += v;
            }
            if let Some(lp) = log_p {
                for kk in 0..k {
                    let w: f64 = zr
                        .iter()
                        .enumerate()
                        .filter(|(l, _)| l >> kk & 1 == 1)
                        .map(|(_, v)| v)
                        .sum();
                    acc[n + kk] += w;
                    acc[n + k + kk] -= w * lp[[j, kk]];
                }
            }
            if let Some(a) = annot {
                for dd in 0..d {
                    if a[[j, dd]] != 0.0 {
                        let base = n + 2 * k + dd * n;
                        for (acc_l, v) in acc[base..base + n].iter_mut().zip(zr) {
                            *acc_l += v;
                        }
                    }
                }
            }
        }
    });
    SufficientStats {
        state_mass: sums[..n].to_vec(),
        alpha_num: sums[n..n + k].to_vec(),
        alpha_den: sums[n + k..n + 2 * k].to_vec(),
        annot_mass: (0..d)
            .map(|dd| sums[n + 2 * k + dd * n..n + 2 * k + (dd + 1) * n].to_vec())
            .collect(),
    }
}

/// Maximizes `sum_l mass_l log pi_l` subject to `pi_l >= floor`: states whose
/// proportional share would fall below the floor are pinned to it and the
/// remaining mass is renormalized over the others.
fn floor_and_normalize(mass: &[f64], floor: f64) -> Vec<f64> {
    let n = mass.len();
    let mut pinned = vec![false; n];
    loop {
        let free_mass = 1.0 - floor * pinned.iter().filter(|&&p| p).count() as f64;
        let free_total: f64 = mass.iter().zip(&pinned).filter(|(_, &p)| !p).map(|(m, _)| m).sum();
        let mut changed = false;
        let out: Vec<f64> = mass
            .iter()
            .zip(pinned.iter_mut())
            .map(|(&m, p)| {
                if *p {
                    return floor;
                }
                let v = if free_total > 0.0 { free_mass * m / free_total } else { 0.0 };
                if v < floor {
                    *p = true;
                    changed = true;
                }
                v
            })
            .collect();
        if !changed {
            return out;
        }
    }
}

/// Unconstrained update of the state proportions: posterior column means,
/// floored at `pi_floor` and renormalized.
pub fn m_step_pi(z: &PosteriorMatrix, pi_floor: f64) -> Vec<f64> {
    let stats = sufficient_stats(z, None, None, DEFAULT_CHUNK_SIZE);
    floor_and_normalize(&stats.state_mass, pi_floor)
}

fn constrained_from_mass(mass: &[f64], pi_floor: f64) -> Vec<f64> {
    let total: f64 = mass.iter().sum();
    let lim = (pi_floor, 1.0 - pi_floor);
    let a = project((mass[1] + mass[3]) / total, lim);
    let b = project((mass[2] + mass[3]) / total, lim);
    vec![(1.0 - a) * (1.0 - b), a * (1.0 - b), (1.0 - a) * b, a * b]
}

/// Update of the state proportions under `pi_11 = pi_1* pi_*1` (two studies
/// only). The marginal rates are clamped into `[pi_floor, 1 - pi_floor]`.
pub fn m_step_pi_constrained(z: &PosteriorMatrix, pi_floor: f64) -> Result<Vec<f64>> {
    if z.n_states() != 4 {
        return Err(GpaError::Config(
            "the independence constraint is defined for two studies only".into(),
        ));
    }
    let stats = sufficient_stats(z, None, None, DEFAULT_CHUNK_SIZE);
    Ok(constrained_from_mass(&stats.state_mass, pi_floor))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaUpdate {
    pub alpha: Vec<f64>,
    /// `true` where the previous value was kept because the study had no
    /// posterior non-null mass.
    pub held: Vec<bool>,
}

fn alpha_from_stats(num: &[f64], den: &[f64], previous: &[f64], bounds: (f64, f64)) -> AlphaUpdate {
    let mut held = vec![false; num.len()];
    let alpha = num
        .iter()
        .zip(den)
        .zip(previous)
        .enumerate()
        .map(|(k, ((&n, &d), &prev))| {
            if d > 0.0 && n > 0.0 {
                project(n / d, bounds)
            } else {
                held[k] = true;
                prev
            }
        })
        .collect();
    AlphaUpdate { alpha, held }
}

pub fn m_step_alpha(
    z: &PosteriorMatrix,
    pvalues: &PValueMatrix,
    bounds: (f64, f64),
    previous: &[f64],
) -> Result<AlphaUpdate> {
    let data = ModelData::new(pvalues, None)?;
    if z.n_snps() != data.n_snps() || z.n_states() != 1 << data.n_studies() {
        return Err(GpaError::Config("posteriors do not match p-value dimensions".into()));
    }
    let stats = sufficient_stats(z, Some(&data.log_p), None, DEFAULT_CHUNK_SIZE);
    Ok(alpha_from_stats(&stats.alpha_num, &stats.alpha_den, previous, bounds))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QUpdate {
    pub q: Vec<Vec<f64>>,
    /// `(annotation, state)` pairs that fell back to the annotation column mean.
    pub held: Vec<(usize, usize)>,
}

fn q_from_stats(annot_mass: &[Vec<f64>], state_mass: &[f64], means: &[f64], bounds: (f64, f64)) -> QUpdate {
    let mut held = Vec::new();
    let q = annot_mass
        .iter()
        .enumerate()
        .map(|(d, row)| {
            row.iter()
                .zip(state_mass)
                .enumerate()
                .map(|(l, (&num, &den))| {
                    if den > 0.0 {
                        project(num / den, bounds)
                    } else {
                        held.push((d, l));
                        project(means[d], bounds)
                    }
                })
                .collect()
        })
        .collect();
    QUpdate { q, held }
}

pub fn m_step_q(z: &PosteriorMatrix, annotation: &AnnotationMatrix, bounds: (f64, f64)) -> Result<QUpdate> {
    if z.n_snps() != annotation.n_snps() {
        return Err(GpaError::Config("posteriors and annotation differ in row count".into()));
    }
    let annot = annotation.values().mapv(f64::from);
    let stats = sufficient_stats(z, None, Some(&annot), DEFAULT_CHUNK_SIZE);
    let means: Vec<f64> = (0..annotation.n_annotations())
        .map(|d| annotation.column_mean(d))
        .collect();
    Ok(q_from_stats(&stats.annot_mass, &stats.state_mass, &means, bounds))
}

/// Fits the model by EM. With `constrained_null`, the state proportions of a
/// two-study model are restricted to the independence surface.
pub fn fit(
    pvalues: &PValueMatrix,
    annotation: Option<&AnnotationMatrix>,
    opts: &EmOptions,
    constrained_null: bool,
) -> Result<FitResult> {
    if let Some(a) = annotation {
        a.check_aligned(pvalues)?;
    }
    let data = ModelData::new(pvalues, annotation)?;
    fit_data(&data, opts, constrained_null)
}

pub(crate) fn fit_data(data: &ModelData, opts: &EmOptions, constrained_null: bool) -> Result<FitResult> {
    opts.validate()?;
    if constrained_null && data.n_studies() != 2 {
        return Err(GpaError::Config(format!(
            "the constrained null fit needs exactly 2 studies, got {}",
            data.n_studies()
        )));
    }
    let mut params = initialize_data(data, opts)?;
    if constrained_null {
        let mass: Vec<f64> = params.pi.clone();
        params.pi = constrained_from_mass(&mass, opts.pi_floor);
    }
    let means = column_means(data);
    let mut diagnostics = FitDiagnostics {
        alpha_held: vec![0; data.n_studies()],
        ..Default::default()
    };
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let posteriors = loop {
        let (z, ll) = e_step_data(data, &params, opts.chunk_size)?;
        if let Some(&prev) = trace.last() {
            if ll < prev - ASCENT_SLACK {
                diagnostics.ascent_violations += 1;
                ASCENT_VIOLATIONS.fetch_add(1, Ordering::Relaxed);
            }
            trace.push(ll);
            if ((ll - prev) / (ll.abs() + 1.0)).abs() < opts.tol {
                converged = true;
                break z;
            }
        } else {
            trace.push(ll);
        }
        if iterations >= opts.max_iters {
            break z;
        }
        let stats = sufficient_stats(&z, Some(&data.log_p), data.annot.as_ref(), opts.chunk_size);
        params.pi = if constrained_null {
            constrained_from_mass(&stats.state_mass, opts.pi_floor)
        } else {
            floor_and_normalize(&stats.state_mass, opts.pi_floor)
        };
        let alpha = alpha_from_stats(&stats.alpha_num, &stats.alpha_den, &params.alpha, opts.alpha_bounds);
        for (count, held) in diagnostics.alpha_held.iter_mut().zip(&alpha.held) {
            *count += usize::from(*held);
        }
        params.alpha = alpha.alpha;
        if data.has_annotation() {
            let q = q_from_stats(&stats.annot_mass, &stats.state_mass, &means, opts.q_bounds);
            diagnostics.q_held += q.held.len();
            params.q = q.q;
        }
        iterations += 1;
    };
    Ok(FitResult {
        params,
        loglik_trace: trace,
        posteriors,
        std_errors: None,
        converged,
        iterations,
        used_annotation: data.has_annotation(),
        constrained_null,
        diagnostics,
        options: opts.clone(),
    })
}

/// Parameters after one further EM update from `params`.
pub fn em_update(
    pvalues: &PValueMatrix,
    annotation: Option<&AnnotationMatrix>,
    params: &GpaParams,
    opts: &EmOptions,
    constrained_null: bool,
) -> Result<GpaParams> {
    let one_step = EmOptions {
        max_iters: 1,
        tol: f64::MIN_POSITIVE,
        init: InitSpec::Explicit(params.clone()),
        ..opts.clone()
    };
    let data = ModelData::new(pvalues, annotation)?;
    let fitted = fit_data(&data, &one_step, constrained_null)?;
    Ok(fitted.params)
}
