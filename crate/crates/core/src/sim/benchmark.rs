//! Benchmark of the four analysis modes on liability-threshold simulations.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use super::liability::{simulate_study_pair, SimData};
use super::metrics::{auc, power_and_fdr};
use crate::em::{fit, EmOptions, FitResult};
use crate::error::{GpaError, Result};
use crate::inference::lrt::{enrichment_from_fits, pleiotropy_from_fits};
use crate::inference::local_fdr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One single-study fit per study, no annotation.
    Separate,
    SeparateAnn,
    /// One fit over both studies.
    Joint,
    JointAnn,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Separate, Mode::SeparateAnn, Mode::Joint, Mode::JointAnn];

    pub fn label(self) -> &'static str {
        match self {
            Mode::Separate => "separate",
            Mode::SeparateAnn => "separate+ann",
            Mode::Joint => "joint",
            Mode::JointAnn => "joint+ann",
        }
    }

    pub fn is_joint(self) -> bool {
        matches!(self, Mode::Joint | Mode::JointAnn)
    }

    pub fn is_annotated(self) -> bool {
        matches!(self, Mode::SeparateAnn | Mode::JointAnn)
    }

    fn without_annotation(self) -> Mode {
        if self.is_joint() {
            Mode::Joint
        } else {
            Mode::Separate
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    /// Simulation settings, one per grid point; their `seed` fields are
    /// replaced by seeds derived from `master_seed`.
    pub grid: Vec<SimConfig>,
    pub modes: Vec<Mode>,
    pub replicates: usize,
    pub master_seed: u64,
    /// Global FDR level for power and realized FDR.
    pub tau: f64,
    /// Level at which test rejection rates are reported.
    pub test_level: f64,
    /// Run the pleiotropy test in joint modes and the enrichment test in
    /// annotated modes.
    pub run_tests: bool,
    pub em: EmOptions,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            grid: vec![SimConfig::default()],
            modes: Mode::ALL.to_vec(),
            replicates: 10,
            master_seed: 1,
            tau: 0.2,
            test_level: 0.05,
            run_tests: true,
            em: EmOptions::default(),
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() || self.modes.is_empty() || self.replicates == 0 {
            return Err(GpaError::Config("benchmark needs a grid point, a mode and a replicate".into()));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) || !(self.test_level > 0.0 && self.test_level < 1.0) {
            return Err(GpaError::Config("tau and test_level must lie in (0, 1)".into()));
        }
        for (i, cfg) in self.grid.iter().enumerate() {
            cfg.validate()
                .map_err(|e| GpaError::Config(format!("grid point {}: {e}", i + 1)))?;
            if cfg.n_traits != 2 && self.modes.iter().any(|m| m.is_joint()) {
                return Err(GpaError::Config(format!(
                    "grid point {}: joint modes need two traits",
                    i + 1
                )));
            }
        }
        self.em.validate()
    }
}

/// Seed of replicate `rep` at grid point `cfg_idx`: the first word of the
/// ChaCha8 stream `cfg_idx << 32 | rep` keyed by the master seed.
pub fn replicate_seed(master_seed: u64, cfg_idx: usize, rep: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((cfg_idx as u64) << 32 | rep as u64);
    rng.next_u64()
}

/// Metrics of one mode for one study in one replicate. `None` marks a value
/// that could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub cfg: usize,
    pub gamma: f64,
    pub mode: Mode,
    pub replicate: usize,
    pub seed: u64,
    pub study: usize,
    pub auc: Option<f64>,
    pub power: Option<f64>,
    pub realized_fdr: Option<f64>,
    pub n_declared: Option<usize>,
    pub converged: Option<bool>,
    pub iterations: Option<usize>,
    pub pleiotropy_statistic: Option<f64>,
    pub pleiotropy_p: Option<f64>,
    pub enrichment_statistic: Option<f64>,
    pub enrichment_p: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cfg: usize,
    pub gamma: f64,
    pub mode: Mode,
    pub study: usize,
    pub n_ok: usize,
    pub n_failed: usize,
    pub auc_mean: Option<f64>,
    pub auc_sd: Option<f64>,
    pub power_mean: Option<f64>,
    pub power_sd: Option<f64>,
    pub fdr_mean: Option<f64>,
    pub fdr_sd: Option<f64>,
    pub pleiotropy_rejection_rate: Option<f64>,
    pub enrichment_rejection_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub rows: Vec<ReplicateRow>,
    pub summary: Vec<SummaryRow>,
}

fn fmt_opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "NA".to_string(), |x| x.to_string())
}

impl BenchmarkTable {
    pub fn summary_for(&self, cfg: usize, mode: Mode, study: usize) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.cfg == cfg && s.mode == mode && s.study == study)
    }

    /// Tab-separated rendering: the replicate table, then a `# summary`
    /// marker line and the summary table. Grid points and studies are
    /// numbered from 1.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str(
            "cfg\tgamma\tmode\treplicate\tseed\tstudy\tauc\tpower\trealized_fdr\tn_declared\tconverged\t\
             iterations\tpleiotropy_statistic\tpleiotropy_p\tenrichment_statistic\tenrichment_p\tstatus\n",
        );
        for r in &self.rows {
            let status = r.error.as_deref().map_or("ok".to_string(), |e| format!("error: {}", e.replace(['\t', '\n'], " ")));
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.cfg + 1,
                r.gamma,
                r.mode.label(),
                r.replicate + 1,
                r.seed,
                r.study + 1,
                fmt_opt(&r.auc),
                fmt_opt(&r.power),
                fmt_opt(&r.realized_fdr),
                fmt_opt(&r.n_declared),
                fmt_opt(&r.converged),
                fmt_opt(&r.iterations),
                fmt_opt(&r.pleiotropy_statistic),
                fmt_opt(&r.pleiotropy_p),
                fmt_opt(&r.enrichment_statistic),
                fmt_opt(&r.enrichment_p),
                status
            );
        }
        out.push_str("# summary\n");
        out.push_str(
            "cfg\tgamma\tmode\tstudy\tn_ok\tn_failed\tauc_mean\tauc_sd\tpower_mean\tpower_sd\tfdr_mean\tfdr_sd\t\
             pleiotropy_rejection_rate\tenrichment_rejection_rate\n",
        );
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                s.cfg + 1,
                s.gamma,
                s.mode.label(),
                s.study + 1,
                s.n_ok,
                s.n_failed,
                fmt_opt(&s.auc_mean),
                fmt_opt(&s.auc_sd),
                fmt_opt(&s.power_mean),
                fmt_opt(&s.power_sd),
                fmt_opt(&s.fdr_mean),
                fmt_opt(&s.fdr_sd),
                fmt_opt(&s.pleiotropy_rejection_rate),
                fmt_opt(&s.enrichment_rejection_rate)
            );
        }
        out
    }
}

/// Fits for one mode: one per study in separate modes, a single joint fit
/// otherwise.
fn fit_mode(data: &SimData, mode: Mode, opts: &EmOptions, constrained: bool) -> Result<Vec<FitResult>> {
    let ann = mode.is_annotated().then_some(&data.annotation);
    if mode.is_joint() {
        Ok(vec![fit(&data.pvalues, ann, opts, constrained)?])
    } else {
        (0..data.pvalues.n_studies())
            .map(|k| fit(&data.pvalues.select_studies(&[k])?, ann, opts, false))
            .collect()
    }
}

fn run_replicate(bench: &BenchmarkConfig, cfg_idx: usize, rep: usize) -> Vec<ReplicateRow> {
    let base = &bench.grid[cfg_idx];
    let seed = replicate_seed(bench.master_seed, cfg_idx, rep);
    let sim_cfg = SimConfig { seed, ..base.clone() };
    let n_studies = base.n_traits;
    let blank = |mode: Mode, study: usize, error: Option<String>| ReplicateRow {
        cfg: cfg_idx,
        gamma: base.gamma(),
        mode,
        replicate: rep,
        seed,
        study,
        auc: None,
        power: None,
        realized_fdr: None,
        n_declared: None,
        converged: None,
        iterations: None,
        pleiotropy_statistic: None,
        pleiotropy_p: None,
        enrichment_statistic: None,
        enrichment_p: None,
        error,
    };

    let data = match simulate_study_pair(&sim_cfg) {
        Ok(d) => d,
        Err(e) => {
            return bench
                .modes
                .iter()
                .flat_map(|&m| (0..n_studies).map(move |k| (m, k)))
                .map(|(m, k)| blank(m, k, Some(format!("simulation: {e}"))))
                .collect();
        }
    };

    let mut fits: BTreeMap<Mode, Result<Vec<FitResult>>> = BTreeMap::new();
    for &mode in &bench.modes {
        let mut needed = vec![mode];
        if bench.run_tests && mode.is_annotated() {
            needed.push(mode.without_annotation());
        }
        for m in needed {
            fits.entry(m).or_insert_with(|| fit_mode(&data, m, &bench.em, false));
        }
    }

    let mut rows = Vec::new();
    for &mode in &bench.modes {
        let mode_fits = match &fits[&mode] {
            Ok(f) => f,
            Err(e) => {
                rows.extend((0..n_studies).map(|k| blank(mode, k, Some(format!("fit: {e}")))));
                continue;
            }
        };
        let pleiotropy = (bench.run_tests && mode.is_joint())
            .then(|| {
                let null = fit_mode(&data, mode, &bench.em, true)?;
                pleiotropy_from_fits(&mode_fits[0], &null[0])
            })
            .and_then(Result::ok);
        let enrichment: Vec<Option<_>> = if bench.run_tests && mode.is_annotated() {
            match &fits[&mode.without_annotation()] {
                Ok(plain) => mode_fits
                    .iter()
                    .zip(plain)
                    .map(|(alt, null)| enrichment_from_fits(alt, null, &data.annotation).ok())
                    .collect(),
                Err(_) => vec![None; mode_fits.len()],
            }
        } else {
            vec![None; mode_fits.len()]
        };

        for k in 0..n_studies {
            let (f, study_in_fit, fit_idx) = if mode.is_joint() {
                (&mode_fits[0], k, 0)
            } else {
                (&mode_fits[k], 0, k)
            };
            let mut row = blank(mode, k, None);
            row.converged = Some(f.converged);
            row.iterations = Some(f.iterations);
            row.pleiotropy_statistic = pleiotropy.as_ref().map(|t| t.statistic);
            row.pleiotropy_p = pleiotropy.as_ref().map(|t| t.p_value);
            row.enrichment_statistic = enrichment[fit_idx].as_ref().map(|t| t.statistic);
            row.enrichment_p = enrichment[fit_idx].as_ref().map(|t| t.p_value);
            let truth = &data.truth.causal[k];
            let metrics = local_fdr(f, study_in_fit).and_then(|lfdr| Ok((auc(&lfdr, truth)?, power_and_fdr(&lfdr, truth, bench.tau)?)));
            match metrics {
                Ok((a, pf)) => {
                    row.auc = Some(a);
                    row.power = Some(pf.power);
                    row.realized_fdr = Some(pf.realized_fdr);
                    row.n_declared = Some(pf.n_declared);
                }
                Err(e) => row.error = Some(format!("metrics: {e}")),
            }
            rows.push(row);
        }
    }
    rows
}

fn mean_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.len() > 1)
        .then(|| (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), sd)
}

fn rejection_rate(p_values: impl Iterator<Item = Option<f64>>, level: f64) -> Option<f64> {
    let ps: Vec<f64> = p_values.flatten().collect();
    (!ps.is_empty()).then(|| ps.iter().filter(|&&p| p < level).count() as f64 / ps.len() as f64)
}

fn summarize(bench: &BenchmarkConfig, rows: &[ReplicateRow]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for (cfg_idx, cfg) in bench.grid.iter().enumerate() {
        for &mode in &bench.modes {
            for study in 0..cfg.n_traits {
                let group: Vec<&ReplicateRow> = rows
                    .iter()
                    .filter(|r| r.cfg == cfg_idx && r.mode == mode && r.study == study)
                    .collect();
                let ok: Vec<&&ReplicateRow> = group.iter().filter(|r| r.error.is_none()).collect();
                let collect = |f: fn(&ReplicateRow) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
                let (auc_mean, auc_sd) = mean_sd(&collect(|r| r.auc));
                let (power_mean, power_sd) = mean_sd(&collect(|r| r.power));
                let (fdr_mean, fdr_sd) = mean_sd(&collect(|r| r.realized_fdr));
                out.push(SummaryRow {
                    cfg: cfg_idx,
                    gamma: cfg.gamma(),
                    mode,
                    study,
                    n_ok: ok.len(),
                    n_failed: group.len() - ok.len(),
                    auc_mean,
                    auc_sd,
                    power_mean,
                    power_sd,
                    fdr_mean,
                    fdr_sd,
                    pleiotropy_rejection_rate: rejection_rate(group.iter().map(|r| r.pleiotropy_p), bench.test_level),
                    enrichment_rejection_rate: rejection_rate(group.iter().map(|r| r.enrichment_p), bench.test_level),
                });
            }
        }
    }
    out
}

/// Runs every replicate of every grid point. Replicates run concurrently;
/// rows come back ordered by grid point, replicate, mode and study, so the
/// table depends only on the configuration.
pub fn run_benchmark(bench: &BenchmarkConfig) -> Result<BenchmarkTable> {
    bench.validate()?;
    let jobs: Vec<(usize, usize)> = (0..bench.grid.len())
        .flat_map(|c| (0..bench.replicates).map(move |r| (c, r)))
        .collect();
    let rows: Vec<ReplicateRow> = jobs
        .par_iter()
        .map(|&(c, r)| run_replicate(bench, c, r))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let summary = summarize(bench, &rows);
    Ok(BenchmarkTable { rows, summary })
}

/// Run description written next to a benchmark table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub version: String,
    pub config: BenchmarkConfig,
    pub threads: usize,
    pub chunk_size: usize,
    /// `(grid point, replicate, seed)`, numbered from 1.
    pub replicate_seeds: Vec<(usize, usize, u64)>,
}

impl BenchmarkManifest {
    pub fn new(bench: &BenchmarkConfig, threads: usize) -> Self {
        let replicate_seeds = (0..bench.grid.len())
            .flat_map(|c| (0..bench.replicates).map(move |r| (c + 1, r + 1, replicate_seed(bench.master_seed, c, r))))
            .collect();
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: bench.clone(),
            threads,
            chunk_size: bench.em.chunk_size,
            replicate_seeds,
        }
    }
}
