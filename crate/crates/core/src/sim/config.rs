use serde::{Deserialize, Serialize};

use crate::error::{GpaError, Result};

/// Liability-threshold simulation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Number of independent SNPs (M).
    pub n_snps: usize,
    /// Causal SNPs per trait (m).
    pub n_causal: usize,
    /// Causal SNPs shared by the two traits. `None` draws the two causal sets
    /// independently, which is the no-pleiotropy setting.
    pub n_shared: Option<usize>,
    /// Cases, and also controls, sampled per study (N).
    pub n_cases: usize,
    pub h2: f64,
    pub prevalence: f64,
    pub maf_range: (f64, f64),
    /// Annotation probability for causal SNPs.
    pub q1: f64,
    /// Annotation probability for non-causal SNPs.
    pub q0: f64,
    /// Cohort size as a multiple of `n_cases`; defaults to
    /// `20 * max(1, 1 / (2 * prevalence))`.
    pub cohort_multiplier: Option<f64>,
    /// 1 for a single GWAS, 2 for a pair of studies on disjoint cohorts.
    pub n_traits: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_snps: 20_000,
            n_causal: 1000,
            n_shared: None,
            n_cases: 5000,
            h2: 0.6,
            prevalence: 0.1,
            maf_range: (0.05, 0.5),
            q1: 0.4,
            q0: 0.1,
            cohort_multiplier: None,
            n_traits: 2,
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(GpaError::Config(m.to_string()));
        if self.n_causal == 0 || self.n_causal > self.n_snps {
            return err("need 0 < n_causal <= n_snps");
        }
        if let Some(s) = self.n_shared {
            if s > self.n_causal {
                return err("n_shared cannot exceed n_causal");
            }
            if 2 * self.n_causal - s > self.n_snps {
                return err("the two causal sets do not fit in n_snps");
            }
        }
        if !(self.h2 > 0.0 && self.h2 < 1.0) {
            return err("h2 must lie in (0, 1)");
        }
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return err("prevalence must lie in (0, 1)");
        }
        let (lo, hi) = self.maf_range;
        if !(lo > 0.0 && lo <= hi && hi <= 0.5) {
            return err("maf_range must satisfy 0 < lo <= hi <= 0.5");
        }
        if !(self.q0 > 0.0 && self.q0 < 1.0 && self.q1 > 0.0 && self.q1 < 1.0) {
            return err("q0 and q1 must lie in (0, 1)");
        }
        if self.n_cases == 0 {
            return err("n_cases must be positive");
        }
        if !matches!(self.n_traits, 1 | 2) {
            return err("n_traits must be 1 or 2");
        }
        if let Some(c) = self.cohort_multiplier {
            if !(c * self.prevalence > 1.0 && c * (1.0 - self.prevalence) > 1.0) {
                return err("cohort_multiplier too small to supply n_cases cases and controls");
            }
        }
        Ok(())
    }

    pub fn cohort_size(&self) -> usize {
        let mult = self
            .cohort_multiplier
            .unwrap_or(20.0 * f64::max(1.0, 1.0 / (2.0 * self.prevalence)));
        (mult * self.n_cases as f64).ceil() as usize
    }

    /// Fraction of causal SNPs shared; `m / M` when the sets are drawn independently.
    pub fn gamma(&self) -> f64 {
        match self.n_shared {
            Some(s) => s as f64 / self.n_causal as f64,
            None => self.n_causal as f64 / self.n_snps as f64,
        }
    }

    /// Variance of a causal per-allele effect at minor allele frequency `maf`.
    pub fn effect_variance(&self, maf: f64) -> f64 {
        self.h2 / ((1.0 - self.h2) * maf * (1.0 - maf) * self.n_causal as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effect_variance_example() {
        let cfg = SimConfig::default();
        assert!((cfg.effect_variance(0.5) - 0.006).abs() < 1e-15);
    }

    #[test]
    fn defaults() {
        let cfg = SimConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.cohort_size(), 500_000);
        assert!((cfg.gamma() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn missing_fields_take_defaults() {
        let cfg: SimConfig = serde_json::from_str(r#"{"n_snps": 5000, "n_shared": 250}"#).unwrap();
        assert_eq!(cfg.n_snps, 5000);
        assert_eq!(cfg.n_shared, Some(250));
        assert_eq!(cfg.h2, 0.6);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = SimConfig {
            n_shared: Some(2000),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SimConfig {
            cohort_multiplier: Some(5.0),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
