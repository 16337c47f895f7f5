//! Likelihood-ratio tests for annotation enrichment and pleiotropy.

use serde::{Deserialize, Serialize};

use super::chisq::chi_square_sf;
use crate::em::{fit_data, EmOptions, FitResult};
use crate::error::{GpaError, Result};
use crate::model::{n_states, AnnotationMatrix, ModelData, PValueMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrtKind {
    Enrichment,
    Pleiotropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrtResult {
    pub kind: LrtKind,
    /// `max(0, 2 (loglik_alt - loglik_null))`.
    pub statistic: f64,
    /// Unclamped `2 (loglik_alt - loglik_null)`.
    pub raw_statistic: f64,
    pub df: u32,
    pub p_value: f64,
    pub loglik_alt: f64,
    pub loglik_null: f64,
    /// Set when either fit stopped at the iteration limit.
    pub flagged: bool,
}

impl LrtResult {
    pub fn from_logliks(kind: LrtKind, loglik_alt: f64, loglik_null: f64, df: u32) -> Result<Self> {
        let raw = 2.0 * (loglik_alt - loglik_null);
        if !raw.is_finite() {
            return Err(GpaError::Numerical(format!(
                "likelihood-ratio statistic is not finite (alt {loglik_alt}, null {loglik_null})"
            )));
        }
        let statistic = raw.max(0.0);
        Ok(Self {
            kind,
            statistic,
            raw_statistic: raw,
            df,
            p_value: chi_square_sf(statistic, df)?,
            loglik_alt,
            loglik_null,
            flagged: false,
        })
    }

    pub fn rejects_at(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// Log-likelihood of the annotation column when every state shares the same
/// annotation probability, profiled at its MLE (the column mean).
pub fn pooled_annotation_loglik(annotation: &AnnotationMatrix) -> Result<f64> {
    if annotation.n_annotations() != 1 {
        return Err(GpaError::Config(format!(
            "enrichment is tested one annotation at a time, got {} columns",
            annotation.n_annotations()
        )));
    }
    let m = annotation.n_snps() as f64;
    let q = annotation.column_mean(0);
    if q == 0.0 || q == 1.0 {
        return Err(GpaError::Data(format!(
            "annotation '{}' is constant; enrichment is not estimable",
            annotation.annotation_labels()[0]
        )));
    }
    Ok(m * (q * q.ln() + (1.0 - q) * (1.0 - q).ln()))
}

/// Enrichment test from an annotated fit and the matching fit without
/// annotation. The null likelihood is the annotation-free fit plus the
/// pooled annotation term, so both likelihoods cover the same data.
pub fn enrichment_from_fits(
    alt: &FitResult,
    without_annotation: &FitResult,
    annotation: &AnnotationMatrix,
) -> Result<LrtResult> {
    if !alt.used_annotation || without_annotation.used_annotation {
        return Err(GpaError::Config(
            "enrichment needs one annotated and one annotation-free fit".into(),
        ));
    }
    let null = without_annotation.loglik() + pooled_annotation_loglik(annotation)?;
    let df = (n_states(alt.n_studies()) - 1) as u32;
    let mut res = LrtResult::from_logliks(LrtKind::Enrichment, alt.loglik(), null, df)?;
    res.flagged = !(alt.converged && without_annotation.converged);
    Ok(res)
}

pub fn test_enrichment(pvalues: &PValueMatrix, annotation: &AnnotationMatrix, opts: &EmOptions) -> Result<LrtResult> {
    annotation.check_aligned(pvalues)?;
    pooled_annotation_loglik(annotation)?;
    let alt = fit_data(&ModelData::new(pvalues, Some(annotation))?, opts, false)?;
    let null = fit_data(&ModelData::new(pvalues, None)?, opts, false)?;
    enrichment_from_fits(&alt, &null, annotation)
}

pub fn pleiotropy_from_fits(alt: &FitResult, null: &FitResult) -> Result<LrtResult> {
    if alt.constrained_null || !null.constrained_null {
        return Err(GpaError::Config(
            "pleiotropy needs an unconstrained and a constrained fit".into(),
        ));
    }
    let mut res = LrtResult::from_logliks(LrtKind::Pleiotropy, alt.loglik(), null.loglik(), 1)?;
    res.flagged = !(alt.converged && null.converged);
    Ok(res)
}

/// Pleiotropy test between two studies: unconstrained fit against the fit
/// restricted to `pi_11 = pi_1* pi_*1`.
pub fn test_pleiotropy(
    pvalues: &PValueMatrix,
    annotation: Option<&AnnotationMatrix>,
    opts: &EmOptions,
) -> Result<LrtResult> {
    if pvalues.n_studies() != 2 {
        return Err(GpaError::Config(format!(
            "pleiotropy is tested between 2 studies, got {}",
            pvalues.n_studies()
        )));
    }
    if let Some(a) = annotation {
        a.check_aligned(pvalues)?;
    }
    let data = ModelData::new(pvalues, annotation)?;
    let alt = fit_data(&data, opts, false)?;
    let null = fit_data(&data, opts, true)?;
    pleiotropy_from_fits(&alt, &null)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::fit;
    use crate::model::{total_log_likelihood, GpaParams};
    use crate::sim::generative::sample_model;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn negative_statistic_is_clamped() {
        let r = LrtResult::from_logliks(LrtKind::Pleiotropy, -1000.0, -1000.0 + 0.0025, 1).unwrap();
        assert!((r.raw_statistic + 0.005).abs() < 1e-9);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn statistic_and_p_value() {
        let r = LrtResult::from_logliks(LrtKind::Pleiotropy, -100.0, -100.0 - 29.849 / 2.0, 1).unwrap();
        assert!((r.statistic - 29.849).abs() < 1e-9);
        assert!((r.p_value / 4.670e-8 - 1.0).abs() < 5e-3);
    }

    #[test]
    fn enrichment_df_follows_state_count() {
        let truth = GpaParams {
            pi: vec![0.7, 0.1, 0.1, 0.1],
            alpha: vec![0.3, 0.4],
            q: vec![vec![0.1, 0.3, 0.3, 0.5]],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_model(&truth, 4000, &mut rng).unwrap();
        let r = test_enrichment(&s.pvalues, s.annotation.as_ref().unwrap(), &EmOptions::default()).unwrap();
        assert_eq!(r.df, 3);
        assert!(r.p_value < 1e-6);
        let one = s.pvalues.select_studies(&[0]).unwrap();
        let r = test_enrichment(&one, s.annotation.as_ref().unwrap(), &EmOptions::default()).unwrap();
        assert_eq!(r.df, 1);
    }

    #[test]
    fn constant_annotation_is_not_estimable() {
        let pm = PValueMatrix::from_values(array![[0.1], [0.3], [0.5]]).unwrap();
        let am = AnnotationMatrix::aligned_to(&pm, array![[1u8], [1], [1]]).unwrap();
        assert!(matches!(
            test_enrichment(&pm, &am, &EmOptions::default()),
            Err(GpaError::Data(_))
        ));
    }

    #[test]
    fn null_likelihood_equals_alt_when_q_is_pooled() {
        let truth = GpaParams {
            pi: vec![0.8, 0.2],
            alpha: vec![0.3],
            q: vec![vec![0.2, 0.2]],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = sample_model(&truth, 3000, &mut rng).unwrap();
        let am = s.annotation.unwrap();
        let no_ann = fit(&s.pvalues, None, &EmOptions::default(), false).unwrap();
        let qbar = am.column_mean(0);
        let pooled = GpaParams {
            q: vec![vec![qbar, qbar]],
            ..no_ann.params.clone()
        };
        let at_pooled = total_log_likelihood(&s.pvalues, Some(&am), &pooled).unwrap();
        let null = no_ann.loglik() + pooled_annotation_loglik(&am).unwrap();
        assert!((at_pooled - null).abs() < 1e-8 * null.abs().max(1.0));
    }

    #[test]
    fn pleiotropy_detects_shared_signal() {
        let truth = GpaParams {
            pi: vec![0.8, 0.02, 0.02, 0.16],
            alpha: vec![0.3, 0.3],
            q: vec![],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = sample_model(&truth, 10_000, &mut rng).unwrap();
        let r = test_pleiotropy(&s.pvalues, None, &EmOptions::default()).unwrap();
        assert_eq!(r.df, 1);
        assert!(r.p_value < 1e-10, "{r:?}");
        let one = s.pvalues.select_studies(&[0]).unwrap();
        assert!(test_pleiotropy(&one, None, &EmOptions::default()).is_err());
    }
}
