//! Data model of the GPA mixture: p-value and annotation matrices,
//! association states, parameters, densities and the joint likelihood.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{GpaError, Result};
use crate::reduce::{chunked_sum, DEFAULT_CHUNK_SIZE};

/// Smallest p-value kept after ingestion; anything below is clamped up to it.
pub const P_FLOOR: f64 = 1e-300;

/// Largest supported number of studies (2^8 association states).
pub const MAX_STUDIES: usize = 8;

/// Clamps a p-value into `[P_FLOOR, 1]`, reporting whether it was raised.
pub fn clamp_pvalue(p: f64) -> (f64, bool) {
    if p < P_FLOOR {
        (P_FLOOR, true)
    } else {
        (p.min(1.0), false)
    }
}

/// Per-SNP, per-study p-values keyed by SNP identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct PValueMatrix {
    snp_ids: Vec<String>,
    values: Array2<f64>,
    study_labels: Vec<String>,
}

impl PValueMatrix {
    pub fn new(snp_ids: Vec<String>, values: Array2<f64>, study_labels: Vec<String>) -> Result<Self> {
        let (m, k) = values.dim();
        if m == 0 || k == 0 {
            return Err(GpaError::Data(format!("p-value matrix must be non-empty, got {m}x{k}")));
        }
        if snp_ids.len() != m {
            return Err(GpaError::Config(format!(
                "{} SNP ids for {m} p-value rows",
                snp_ids.len()
            )));
        }
        if study_labels.len() != k {
            return Err(GpaError::Config(format!(
                "{} study labels for {k} p-value columns",
                study_labels.len()
            )));
        }
        check_unique(&snp_ids)?;
        for ((j, kk), &p) in values.indexed_iter() {
            if !(p.is_finite() && p > 0.0 && p <= 1.0) {
                return Err(GpaError::Data(format!(
                    "p-value {p} for SNP {} in study {} is outside (0, 1]",
                    snp_ids[j], study_labels[kk]
                )));
            }
        }
        Ok(Self {
            snp_ids,
            values,
            study_labels,
        })
    }

    /// Builds a matrix with generated SNP ids (`snp1`, `snp2`, ...) and study
    /// labels (`study1`, ...).
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let (m, k) = values.dim();
        let ids = (1..=m).map(|j| format!("snp{j}")).collect();
        let labels = (1..=k).map(|kk| format!("study{kk}")).collect();
        Self::new(ids, values, labels)
    }

    pub fn n_snps(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_studies(&self) -> usize {
        self.values.ncols()
    }

    pub fn snp_ids(&self) -> &[String] {
        &self.snp_ids
    }

    pub fn study_labels(&self) -> &[String] {
        &self.study_labels
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn row(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.row(j)
    }

    /// Keeps only the listed study columns, in the given order.
    pub fn select_studies(&self, studies: &[usize]) -> Result<Self> {
        if let Some(&bad) = studies.iter().find(|&&s| s >= self.n_studies()) {
            return Err(GpaError::Config(format!("study index {bad} out of range")));
        }
        let values = self.values.select(ndarray::Axis(1), studies);
        let labels = studies.iter().map(|&s| self.study_labels[s].clone()).collect();
        Self::new(self.snp_ids.clone(), values, labels)
    }

    /// Reorders rows so that row `i` of the result is row `order[i]` of `self`.
    pub fn permute_rows(&self, order: &[usize]) -> Result<Self> {
        let values = self.values.select(ndarray::Axis(0), order);
        let ids = order.iter().map(|&j| self.snp_ids[j].clone()).collect();
        Self::new(ids, values, self.study_labels.clone())
    }
}

fn check_unique(ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    let mut dups = Vec::new();
    for id in ids {
        if !seen.insert(id.as_str()) && dups.len() < 5 {
            dups.push(id.clone());
        }
    }
    if dups.is_empty() {
        Ok(())
    } else {
        Err(GpaError::Data(format!("duplicate SNP ids: {}", dups.join(", "))))
    }
}

/// Binary per-SNP functional annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationMatrix {
    snp_ids: Vec<String>,
    values: Array2<u8>,
    annotation_labels: Vec<String>,
}

impl AnnotationMatrix {
    pub fn new(snp_ids: Vec<String>, values: Array2<u8>, annotation_labels: Vec<String>) -> Result<Self> {
        let (m, d) = values.dim();
        if snp_ids.len() != m || annotation_labels.len() != d {
            return Err(GpaError::Config(format!(
                "annotation matrix is {m}x{d} but has {} ids and {} labels",
                snp_ids.len(),
                annotation_labels.len()
            )));
        }
        if let Some(((j, dd), v)) = values.indexed_iter().find(|(_, &v)| v > 1) {
            return Err(GpaError::Data(format!(
                "annotation entry {v} at SNP {} column {} is not 0/1",
                snp_ids[j], annotation_labels[dd]
            )));
        }
        Ok(Self {
            snp_ids,
            values,
            annotation_labels,
        })
    }

    /// Annotation aligned to the SNPs of `pvalues`, with generated labels.
    pub fn aligned_to(pvalues: &PValueMatrix, values: Array2<u8>) -> Result<Self> {
        let labels = (1..=values.ncols()).map(|d| format!("annot{d}")).collect();
        Self::new(pvalues.snp_ids().to_vec(), values, labels)
    }

    pub fn n_snps(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_annotations(&self) -> usize {
        self.values.ncols()
    }

    pub fn snp_ids(&self) -> &[String] {
        &self.snp_ids
    }

    pub fn annotation_labels(&self) -> &[String] {
        &self.annotation_labels
    }

    pub fn values(&self) -> &Array2<u8> {
        &self.values
    }

    pub fn column_mean(&self, d: usize) -> f64 {
        let col = self.values.column(d);
        col.iter().map(|&v| v as f64).sum::<f64>() / col.len() as f64
    }

    /// Single-column view used by the enrichment test.
    pub fn column(&self, d: usize) -> Result<Self> {
        if d >= self.n_annotations() {
            return Err(GpaError::Config(format!("annotation index {d} out of range")));
        }
        let values = self.values.select(ndarray::Axis(1), &[d]);
        Self::new(self.snp_ids.clone(), values, vec![self.annotation_labels[d].clone()])
    }

    pub fn permute_rows(&self, order: &[usize]) -> Result<Self> {
        let values = self.values.select(ndarray::Axis(0), order);
        let ids = order.iter().map(|&j| self.snp_ids[j].clone()).collect();
        Self::new(ids, values, self.annotation_labels.clone())
    }

    /// Errors unless the rows are the same SNPs, in the same order, as `pvalues`.
    pub fn check_aligned(&self, pvalues: &PValueMatrix) -> Result<()> {
        if self.snp_ids != pvalues.snp_ids() {
            return Err(GpaError::Config(
                "annotation rows are not aligned with p-value rows".into(),
            ));
        }
        Ok(())
    }
}

/// One of the 2^K association patterns. Bit `k` of `index` is study `k + 1`,
/// so for two studies the order is 00, 10, 01, 11.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AssociationState {
    pub index: usize,
    pub n_studies: usize,
}

impl AssociationState {
    pub fn is_associated(&self, study: usize) -> bool {
        self.index >> study & 1 == 1
    }

    pub fn bits(&self) -> Vec<u8> {
        (0..self.n_studies).map(|k| (self.index >> k & 1) as u8).collect()
    }

    /// Label with study 1 first, e.g. `"10"` for association with study 1 only.
    pub fn label(&self) -> String {
        self.bits().iter().map(|b| char::from(b'0' + b)).collect()
    }
}

pub fn n_states(n_studies: usize) -> usize {
    1 << n_studies
}

pub fn enumerate_states(n_studies: usize) -> Result<Vec<AssociationState>> {
    if !(1..=MAX_STUDIES).contains(&n_studies) {
        return Err(GpaError::Config(format!(
            "number of studies must be in 1..={MAX_STUDIES}, got {n_studies}"
        )));
    }
    Ok((0..n_states(n_studies))
        .map(|index| AssociationState { index, n_studies })
        .collect())
}

/// Model parameters: state proportions, Beta shape per study and annotation
/// emission probabilities (`q[d][l]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpaParams {
    pub pi: Vec<f64>,
    pub alpha: Vec<f64>,
    pub q: Vec<Vec<f64>>,
}

impl GpaParams {
    pub fn n_studies(&self) -> usize {
        self.alpha.len()
    }

    pub fn n_annotations(&self) -> usize {
        self.q.len()
    }

    pub fn n_states(&self) -> usize {
        self.pi.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_studies();
        if !(1..=MAX_STUDIES).contains(&k) {
            return Err(GpaError::Config(format!("alpha has {k} entries")));
        }
        if self.pi.len() != n_states(k) {
            return Err(GpaError::Config(format!(
                "pi has {} entries, expected {}",
                self.pi.len(),
                n_states(k)
            )));
        }
        if self.pi.iter().any(|&p| !(p >= 0.0 && p <= 1.0)) {
            return Err(GpaError::Config("pi entries must lie in [0, 1]".into()));
        }
        let total: f64 = self.pi.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(GpaError::Config(format!("pi sums to {total}, not 1")));
        }
        if self.alpha.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(GpaError::Config("alpha entries must lie in (0, 1)".into()));
        }
        for row in &self.q {
            if row.len() != self.pi.len() {
                return Err(GpaError::Config("q rows must have one entry per state".into()));
            }
            if row.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
                return Err(GpaError::Config("q entries must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }

    /// Same parameters without the annotation block.
    pub fn without_annotation(&self) -> Self {
        Self {
            q: Vec::new(),
            ..self.clone()
        }
    }
}

/// Per-SNP posterior probabilities of each association state.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMatrix {
    pub values: Array2<f64>,
}

impl PosteriorMatrix {
    pub fn n_snps(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_states(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.row(j)
    }
}

/// Log density of Beta(alpha, 1) at `p`.
pub fn beta_log_density(p: f64, alpha: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(GpaError::Domain(format!("p-value {p} outside (0, 1]")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(GpaError::Domain(format!("alpha {alpha} outside (0, 1]")));
    }
    Ok(alpha.ln() + (alpha - 1.0) * p.ln())
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// State log-likelihoods written in linear form:
/// `l_jl = offset_l + sum_k slope_p[l][k] * log P_jk + sum_d slope_a[l][d] * A_jd`.
#[derive(Debug, Clone)]
pub(crate) struct StateTerms {
    pub offset: Vec<f64>,
    pub slope_p: Vec<Vec<f64>>,
    pub slope_a: Vec<Vec<f64>>,
    pub log_pi: Vec<f64>,
}

impl StateTerms {
    pub fn new(params: &GpaParams) -> Self {
        let n = params.n_states();
        let k = params.n_studies();
        let mut offset = vec![0.0; n];
        let mut slope_p = vec![vec![0.0; k]; n];
        let mut slope_a = vec![vec![0.0; params.n_annotations()]; n];
        for l in 0..n {
            for (kk, &a) in params.alpha.iter().enumerate() {
                if l >> kk & 1 == 1 {
                    offset[l] += a.ln();
                    slope_p[l][kk] = a - 1.0;
                }
            }
            for (d, row) in params.q.iter().enumerate() {
                let q = row[l];
                offset[l] += (1.0 - q).ln();
                slope_a[l][d] = q.ln() - (1.0 - q).ln();
            }
        }
        let log_pi = params.pi.iter().map(|p| p.ln()).collect();
        Self {
            offset,
            slope_p,
            slope_a,
            log_pi,
        }
    }

    #[inline]
    pub fn state_logliks(&self, log_p: &[f64], annot: Option<&[f64]>, out: &mut [f64]) {
        for (l, o) in out.iter_mut().enumerate() {
            let mut v = self.offset[l];
            for (s, lp) in self.slope_p[l].iter().zip(log_p) {
                v += s * lp;
            }
            if let Some(a) = annot {
                for (s, av) in self.slope_a[l].iter().zip(a) {
                    v += s * av;
                }
            }
            *o = v;
        }
    }
}

/// Log p-values and annotation indicators, pre-converted for the fitting loops.
#[derive(Debug, Clone)]
pub struct ModelData {
    pub(crate) log_p: Array2<f64>,
    pub(crate) annot: Option<Array2<f64>>,
}

impl ModelData {
    pub fn new(pvalues: &PValueMatrix, annotation: Option<&AnnotationMatrix>) -> Result<Self> {
        let log_p = pvalues.values().mapv(f64::ln);
        let annot = match annotation {
            Some(a) => {
                if a.n_snps() != pvalues.n_snps() {
                    return Err(GpaError::Config(format!(
                        "annotation has {} rows, p-values have {}",
                        a.n_snps(),
                        pvalues.n_snps()
                    )));
                }
                Some(a.values().mapv(f64::from))
            }
            None => None,
        };
        Ok(Self { log_p, annot })
    }

    pub fn n_snps(&self) -> usize {
        self.log_p.nrows()
    }

    pub fn n_studies(&self) -> usize {
        self.log_p.ncols()
    }

    pub fn n_annotations(&self) -> usize {
        self.annot.as_ref().map_or(0, |a| a.ncols())
    }

    pub fn has_annotation(&self) -> bool {
        self.annot.is_some()
    }

    pub(crate) fn log_p_row(&self, j: usize) -> &[f64] {
        let k = self.n_studies();
        &self.log_p.as_slice().expect("standard layout")[j * k..(j + 1) * k]
    }

    pub(crate) fn annot_row(&self, j: usize) -> Option<&[f64]> {
        self.annot.as_ref().map(|a| {
            let d = a.ncols();
            &a.as_slice().expect("standard layout")[j * d..(j + 1) * d]
        })
    }

    pub(crate) fn check_params(&self, params: &GpaParams) -> Result<()> {
        if params.n_studies() != self.n_studies() {
            return Err(GpaError::Config(format!(
                "parameters have {} studies, data has {}",
                params.n_studies(),
                self.n_studies()
            )));
        }
        if params.n_annotations() != self.n_annotations() {
            return Err(GpaError::Config(format!(
                "parameters have {} annotations, data has {}",
                params.n_annotations(),
                self.n_annotations()
            )));
        }
        Ok(())
    }

    /// Per-SNP log-likelihood contributions summed in deterministic order.
    pub(crate) fn total_loglik(&self, params: &GpaParams, chunk_size: usize) -> Result<f64> {
        self.check_params(params)?;
        let terms = StateTerms::new(params);
        let n = params.n_states();
        let sum = chunked_sum(self.n_snps(), chunk_size, 1, |range, acc| {
            let mut buf = vec![0.0; n];
            for j in range {
                terms.state_logliks(self.log_p_row(j), self.annot_row(j), &mut buf);
                for (b, lp) in buf.iter_mut().zip(&terms.log_pi) {
                    *b += lp;
                }
                acc[0] += log_sum_exp(&buf);
            }
        })[0];
        if sum.is_finite() {
            Ok(sum)
        } else {
            Err(GpaError::Numerical(format!(
                "non-finite log-likelihood{}",
                self.first_nonfinite_row(params)
                    .map(|j| format!(" at SNP row {j}"))
                    .unwrap_or_default()
            )))
        }
    }

    pub(crate) fn first_nonfinite_row(&self, params: &GpaParams) -> Option<usize> {
        let terms = StateTerms::new(params);
        let mut buf = vec![0.0; params.n_states()];
        (0..self.n_snps()).find(|&j| {
            terms.state_logliks(self.log_p_row(j), self.annot_row(j), &mut buf);
            for (b, lp) in buf.iter_mut().zip(&terms.log_pi) {
                *b += lp;
            }
            !log_sum_exp(&buf).is_finite()
        })
    }
}

/// Log-likelihood of one SNP under each association state.
pub fn snp_state_loglik(p_row: &[f64], a_row: Option<&[u8]>, params: &GpaParams) -> Result<Vec<f64>> {
    if p_row.len() != params.n_studies() {
        return Err(GpaError::Config(format!(
            "p-value row has {} studies, parameters have {}",
            p_row.len(),
            params.n_studies()
        )));
    }
    let annot: Option<Vec<f64>> = match a_row {
        Some(a) if a.len() != params.n_annotations() => {
            return Err(GpaError::Config(format!(
                "annotation row has {} entries, parameters have {}",
                a.len(),
                params.n_annotations()
            )))
        }
        Some(a) => Some(a.iter().map(|&v| f64::from(v)).collect()),
        None => None,
    };
    let log_p = p_row
        .iter()
        .map(|&p| {
            if p > 0.0 && p <= 1.0 {
                Ok(p.ln())
            } else {
                Err(GpaError::Domain(format!("p-value {p} outside (0, 1]")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let params = match annot {
        Some(_) => params.clone(),
        None => params.without_annotation(),
    };
    let terms = StateTerms::new(&params);
    let mut out = vec![0.0; params.n_states()];
    terms.state_logliks(&log_p, annot.as_deref(), &mut out);
    Ok(out)
}

/// Joint log-likelihood of p-values and (optionally) annotations.
pub fn total_log_likelihood(
    pvalues: &PValueMatrix,
    annotation: Option<&AnnotationMatrix>,
    params: &GpaParams,
) -> Result<f64> {
    ModelData::new(pvalues, annotation)?.total_loglik(params, DEFAULT_CHUNK_SIZE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn k1(pi1: f64, alpha: f64) -> GpaParams {
        GpaParams {
            pi: vec![1.0 - pi1, pi1],
            alpha: vec![alpha],
            q: vec![],
        }
    }

    #[test]
    fn state_enumeration() {
        let s1 = enumerate_states(1).unwrap();
        assert_eq!(s1.iter().map(|s| s.index).collect::<Vec<_>>(), vec![0, 1]);
        let labels: Vec<String> = enumerate_states(2).unwrap().iter().map(|s| s.label()).collect();
        assert_eq!(labels, vec!["00", "10", "01", "11"]);
        let s3 = enumerate_states(3).unwrap();
        assert_eq!(s3.len(), 8);
        assert_eq!(s3[5].bits(), vec![1, 0, 1]);
        assert!(enumerate_states(0).is_err());
        assert!(enumerate_states(9).is_err());
    }

    #[test]
    fn beta_density_values() {
        assert!(beta_log_density(0.25, 0.5).unwrap().abs() < 1e-15);
        assert!((beta_log_density(0.01, 0.5).unwrap() - 5f64.ln()).abs() < 1e-14);
        for p in [1e-300, 1e-5, 0.3, 1.0] {
            assert_eq!(beta_log_density(p, 1.0).unwrap(), 0.0);
        }
        assert!(beta_log_density(0.0, 0.5).is_err());
        assert!(beta_log_density(0.5, 0.0).is_err());
    }

    #[test]
    fn beta_density_integrates_to_one() {
        // Simpson's rule after substituting p = exp(-t), which removes the
        // singularity at p = 0.
        for alpha in [0.05, 0.3, 0.5, 0.9, 1.0] {
            let upper = 60.0 / alpha;
            let n = 200_000;
            let h = upper / n as f64;
            let f = |t: f64| {
                let p: f64 = (-t).exp();
                beta_log_density(p.max(1e-300), alpha).unwrap().exp() * p
            };
            let mut s = f(0.0) + f(upper);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * f(i as f64 * h);
            }
            let integral = s * h / 3.0;
            assert!((integral - 1.0).abs() < 1e-6, "alpha={alpha}: {integral}");
        }
    }

    #[test]
    fn state_logliks_examples() {
        let v = snp_state_loglik(&[0.25], None, &k1(0.5, 0.5)).unwrap();
        assert!(v.iter().all(|x| x.abs() < 1e-15));

        let p2 = GpaParams {
            pi: vec![0.25; 4],
            alpha: vec![0.5, 0.5],
            q: vec![],
        };
        let v = snp_state_loglik(&[0.25, 0.25], None, &p2).unwrap();
        assert_eq!(v.len(), 4);
        assert!(v.iter().all(|x| x.abs() < 1e-15));

        let alpha: f64 = 0.3;
        let pa = GpaParams {
            pi: vec![0.5, 0.5],
            alpha: vec![alpha],
            q: vec![vec![0.2, 0.4]],
        };
        let v = snp_state_loglik(&[0.5], Some(&[1]), &pa).unwrap();
        assert!((v[0] - 0.2f64.ln()).abs() < 1e-15);
        let expected1 = alpha.ln() + (alpha - 1.0) * 0.5f64.ln() + 0.4f64.ln();
        assert!((v[1] - expected1).abs() < 1e-14);

        assert!(snp_state_loglik(&[0.5, 0.5], None, &k1(0.5, 0.5)).is_err());
    }

    #[test]
    fn total_loglik_examples() {
        let one = |p: f64| PValueMatrix::from_values(array![[p]]).unwrap();
        let ll = total_log_likelihood(&one(0.25), None, &k1(0.5, 0.5)).unwrap();
        assert!(ll.abs() < 1e-15);
        let ll = total_log_likelihood(&one(0.01), None, &k1(0.5, 0.5)).unwrap();
        assert!((ll - 3f64.ln()).abs() < 1e-14);

        let pm = PValueMatrix::from_values(array![[0.1, 0.9], [1e-8, 0.3], [0.5, 1e-300]]).unwrap();
        let null = GpaParams {
            pi: vec![1.0, 0.0, 0.0, 0.0],
            alpha: vec![0.3, 0.6],
            q: vec![],
        };
        assert_eq!(total_log_likelihood(&pm, None, &null).unwrap(), 0.0);
    }

    #[test]
    fn loglik_is_finite_at_floor() {
        let pm = PValueMatrix::from_values(array![[P_FLOOR], [1.0]]).unwrap();
        for alpha in [0.999, 1e-6] {
            let ll = total_log_likelihood(&pm, None, &k1(0.3, alpha)).unwrap();
            assert!(ll.is_finite());
        }
        // every state far below exp's range: 60 rare annotations all present
        let pm = PValueMatrix::from_values(array![[0.5, 0.5]]).unwrap();
        let params = GpaParams {
            pi: vec![0.7, 0.1, 0.1, 0.1],
            alpha: vec![0.5, 0.5],
            q: vec![vec![1e-6; 4]; 60],
        };
        let a = AnnotationMatrix::aligned_to(&pm, Array2::from_elem((1, 60), 1u8)).unwrap();
        let ll = total_log_likelihood(&pm, Some(&a), &params).unwrap();
        let f = 0.5 * 0.5f64.powf(-0.5);
        let expected = 60.0 * 1e-6f64.ln() + (0.7 + 0.1 * f + 0.1 * f + 0.1 * f * f).ln();
        assert!(ll < -800.0);
        assert!((ll - expected).abs() < 1e-12 * expected.abs(), "{ll} vs {expected}");
    }

    #[test]
    fn independence_factorization() {
        let pm = PValueMatrix::from_values(array![
            [0.01, 0.5],
            [0.2, 1e-6],
            [0.9, 0.04],
            [3e-4, 2e-3],
            [1.0, 0.7]
        ])
        .unwrap();
        let (a, b) = (0.15, 0.3);
        let (alpha1, alpha2) = (0.35, 0.6);
        let joint = GpaParams {
            pi: vec![(1.0 - a) * (1.0 - b), a * (1.0 - b), (1.0 - a) * b, a * b],
            alpha: vec![alpha1, alpha2],
            q: vec![],
        };
        let ll = total_log_likelihood(&pm, None, &joint).unwrap();
        let m1 = total_log_likelihood(&pm.select_studies(&[0]).unwrap(), None, &k1(a, alpha1)).unwrap();
        let m2 = total_log_likelihood(&pm.select_studies(&[1]).unwrap(), None, &k1(b, alpha2)).unwrap();
        assert!((ll - (m1 + m2)).abs() < 1e-9);
    }

    #[test]
    fn rejects_duplicates_and_bad_values() {
        let ids = vec!["a".to_string(), "a".to_string()];
        assert!(PValueMatrix::new(ids, array![[0.1], [0.2]], vec!["s".into()]).is_err());
        assert!(PValueMatrix::from_values(array![[0.0]]).is_err());
        assert!(PValueMatrix::from_values(array![[1.5]]).is_err());
        let pm = PValueMatrix::from_values(array![[0.5]]).unwrap();
        assert!(AnnotationMatrix::aligned_to(&pm, array![[2u8]]).is_err());
    }

    #[test]
    fn clamping() {
        assert_eq!(clamp_pvalue(0.0), (P_FLOOR, true));
        assert_eq!(clamp_pvalue(1.0), (1.0, false));
        assert_eq!(clamp_pvalue(0.3), (0.3, false));
    }

    proptest::proptest! {
        #[test]
        fn loglik_invariant_under_row_permutation(
            rows in proptest::collection::vec((1e-12f64..1.0, 1e-12f64..1.0, 0u8..2), 2..40),
            seed in 0u64..1000,
        ) {
            let m = rows.len();
            let values = Array2::from_shape_fn((m, 2), |(j, k)| if k == 0 { rows[j].0 } else { rows[j].1 });
            let ann = Array2::from_shape_fn((m, 1), |(j, _)| rows[j].2);
            let pm = PValueMatrix::from_values(values).unwrap();
            let am = AnnotationMatrix::aligned_to(&pm, ann).unwrap();
            let mut order: Vec<usize> = (0..m).collect();
            // deterministic shuffle from the seed
            let mut s = seed;
            for i in (1..m).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                order.swap(i, (s >> 33) as usize % (i + 1));
            }
            let params = GpaParams {
                pi: vec![0.6, 0.15, 0.1, 0.15],
                alpha: vec![0.3, 0.7],
                q: vec![vec![0.1, 0.3, 0.2, 0.5]],
            };
            let a = total_log_likelihood(&pm, Some(&am), &params).unwrap();
            let b = total_log_likelihood(
                &pm.permute_rows(&order).unwrap(),
                Some(&am.permute_rows(&order).unwrap()),
                &params,
            ).unwrap();
            proptest::prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        }
    }
}
