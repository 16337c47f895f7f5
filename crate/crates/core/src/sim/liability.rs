//! Case-control GWAS simulation under the liability threshold model.
//!
//! Each trait has its own cohort. An individual's liability is the sum of
//! per-allele effects over the causal SNPs plus a standard normal
//! environmental term; the top `prevalence` fraction of the cohort are cases.
//! `n_cases` cases and as many controls are then sampled and tested SNP by
//! SNP with the trend test.
//!
//! Only causal genotypes influence liability, so the cohort is simulated on
//! the causal SNPs alone and every individual draws from its own ChaCha
//! stream. Sampled individuals replay their stream to recover genotypes.
//! Non-causal SNPs are independent of case status, so their case and
//! control genotype counts are drawn directly from the Hardy-Weinberg
//! multinomial.
//!
//! Stream layout under the configuration seed: stream 0 carries all global
//! draws (MAFs, causal sets, effects, annotation, sampling of cases and
//! controls, non-causal counts); stream `(1 + 4 * trait + attempt) << 40 | i`
//! belongs to individual `i` of a cohort.

use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use super::trend::{assoc_test_1df, GenotypeTable};
use crate::error::{GpaError, Result};
use crate::model::{clamp_pvalue, AnnotationMatrix, PValueMatrix};

/// Ground truth of a simulated data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    /// Causal indicator per trait, each of length `n_snps`.
    pub causal: Vec<Vec<bool>>,
    pub annotation: Vec<bool>,
    /// `(snp, per-allele effect)` for each causal SNP, per trait.
    pub effects: Vec<Vec<(usize, f64)>>,
    pub mafs: Vec<f64>,
    /// Number of SNPs causal for both traits.
    pub n_shared: usize,
    /// Fraction of cases in each cohort.
    pub case_fraction: Vec<f64>,
    pub cohort_size: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SimData {
    pub pvalues: PValueMatrix,
    pub annotation: AnnotationMatrix,
    pub truth: SimTruth,
}

fn stream_key(seed: u64) -> [u8; 32] {
    ChaCha8Rng::seed_from_u64(seed).get_seed()
}

fn stream_rng(key: [u8; 32], stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Causal SNPs of one trait with precomputed allele thresholds.
struct TraitModel {
    snps: Vec<usize>,
    effects: Vec<f64>,
    // P(allele) scaled to 2^32
    allele_cut: Vec<u64>,
}

impl TraitModel {
    fn new(snps: Vec<usize>, effects: Vec<f64>, mafs: &[f64]) -> Self {
        let allele_cut = snps
            .iter()
            .map(|&j| (mafs[j] * 4_294_967_296.0) as u64)
            .collect();
        Self {
            snps,
            effects,
            allele_cut,
        }
    }

    /// Draws one individual's causal genotypes, calling `visit(c, g)` for
    /// each causal SNP `c`, and returns the genetic value and total
    /// liability.
    #[inline]
    fn draw(&self, rng: &mut ChaCha8Rng, mut visit: impl FnMut(usize, usize)) -> (f64, f64) {
        let mut genetic = 0.0;
        for (c, (&cut, &beta)) in self.allele_cut.iter().zip(&self.effects).enumerate() {
            let bits = rng.next_u64();
            let g = usize::from((bits & 0xffff_ffff) < cut) + usize::from((bits >> 32) < cut);
            visit(c, g);
            genetic += beta * g as f64;
        }
        let env: f64 = rng.sample(StandardNormal);
        (genetic, genetic + env)
    }
}

fn individual_stream(trait_idx: usize, attempt: usize, i: usize) -> u64 {
    ((1 + 4 * trait_idx + attempt) as u64) << 40 | i as u64
}

fn cohort_liabilities(model: &TraitModel, key: [u8; 32], trait_idx: usize, attempt: usize, size: usize) -> Vec<(f64, f64)> {
    (0..size)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(key, individual_stream(trait_idx, attempt, i));
            model.draw(&mut rng, |_, _| {})
        })
        .collect()
}

/// Per-SNP genotype tables for one trait.
fn simulate_trait(
    cfg: &SimConfig,
    model: &TraitModel,
    mafs: &[f64],
    key: [u8; 32],
    trait_idx: usize,
    main: &mut ChaCha8Rng,
) -> Result<(Vec<GenotypeTable>, f64, usize)> {
    let n = cfg.n_cases;
    let mut size = cfg.cohort_size();
    let mut attempt = 0;
    let (liab, threshold) = loop {
        let liab: Vec<f64> = cohort_liabilities(model, key, trait_idx, attempt, size)
            .into_iter()
            .map(|(_, total)| total)
            .collect();
        let mut sorted = liab.clone();
        let idx = (((1.0 - cfg.prevalence) * size as f64).ceil() as usize).clamp(1, size) - 1;
        let (_, &mut threshold, _) = sorted.select_nth_unstable_by(idx, f64::total_cmp);
        let cases = liab.iter().filter(|&&l| l > threshold).count();
        if cases >= n && size - cases >= n {
            break (liab, threshold);
        }
        if attempt == 1 {
            return Err(GpaError::Data(format!(
                "trait {}: cohort of {size} yielded {cases} cases and {} controls, need {n} of each",
                trait_idx + 1,
                size - cases
            )));
        }
        attempt += 1;
        size *= 2;
    };

    let (cases, controls): (Vec<usize>, Vec<usize>) = (0..size).partition(|&i| liab[i] > threshold);
    let case_fraction = cases.len() as f64 / size as f64;
    let mut selected: Vec<(usize, bool)> = Vec::with_capacity(2 * n);
    let mut pick = |pool: &[usize], is_case: bool, rng: &mut ChaCha8Rng| {
        let mut idx: Vec<usize> = sample(rng, pool.len(), n).into_iter().map(|i| pool[i]).collect();
        idx.sort_unstable();
        selected.extend(idx.into_iter().map(|i| (i, is_case)));
    };
    pick(&cases, true, main);
    pick(&controls, false, main);

    let n_causal = model.snps.len();
    let causal_counts = selected
        .par_iter()
        .fold(
            || vec![[0u64; 6]; n_causal],
            |mut acc, &(i, is_case)| {
                let mut rng = stream_rng(key, individual_stream(trait_idx, attempt, i));
                let offset = if is_case { 0 } else { 3 };
                model.draw(&mut rng, |c, g| acc[c][offset + g] += 1);
                acc
            },
        )
        .reduce(
            || vec![[0u64; 6]; n_causal],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    for (u, v) in x.iter_mut().zip(y) {
                        *u += v;
                    }
                }
                a
            },
        );

    let mut tables = vec![None; mafs.len()];
    for (c, &j) in model.snps.iter().enumerate() {
        let k = causal_counts[c];
        tables[j] = Some(GenotypeTable {
            cases: [k[0], k[1], k[2]],
            controls: [k[3], k[4], k[5]],
        });
    }
    let hwe_draw = |f: f64, rng: &mut ChaCha8Rng| -> Result<[u64; 3]> {
        let p0 = (1.0 - f) * (1.0 - f);
        let p1 = 2.0 * f * (1.0 - f);
        let n0 = binomial(n as u64, p0, rng)?;
        let n1 = binomial(n as u64 - n0, (p1 / (1.0 - p0)).min(1.0), rng)?;
        Ok([n0, n1, n as u64 - n0 - n1])
    };
    let tables = tables
        .into_iter()
        .enumerate()
        .map(|(j, t)| match t {
            Some(t) => Ok(t),
            None => Ok(GenotypeTable {
                cases: hwe_draw(mafs[j], main)?,
                controls: hwe_draw(mafs[j], main)?,
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((tables, case_fraction, size))
}

fn binomial(n: u64, p: f64, rng: &mut ChaCha8Rng) -> Result<u64> {
    let dist = Binomial::new(n, p).map_err(|e| GpaError::Numerical(format!("binomial({n}, {p}): {e}")))?;
    Ok(dist.sample(rng))
}

/// Simulates one or two case-control studies on a shared SNP panel, with an
/// annotation column enriched among causal SNPs.
pub fn simulate_study_pair(cfg: &SimConfig) -> Result<SimData> {
    cfg.validate()?;
    let key = stream_key(cfg.seed);
    let mut main = stream_rng(key, 0);
    let m_total = cfg.n_snps;
    let m = cfg.n_causal;
    let (lo, hi) = cfg.maf_range;
    let mafs: Vec<f64> = (0..m_total)
        .map(|_| if hi > lo { main.random_range(lo..hi) } else { lo })
        .collect();

    let causal_sets: Vec<Vec<usize>> = match (cfg.n_traits, cfg.n_shared) {
        (1, _) => vec![sample(&mut main, m_total, m).into_vec()],
        (_, None) => (0..2).map(|_| sample(&mut main, m_total, m).into_vec()).collect(),
        (_, Some(s)) => {
            let picked = sample(&mut main, m_total, 2 * m - s).into_vec();
            let shared = &picked[..s];
            let first: Vec<usize> = shared.iter().chain(&picked[s..m]).copied().collect();
            let second: Vec<usize> = shared.iter().chain(&picked[m..2 * m - s]).copied().collect();
            vec![first, second]
        }
    };

    let models: Vec<TraitModel> = causal_sets
        .iter()
        .map(|snps| {
            let mut snps = snps.clone();
            snps.sort_unstable();
            let effects = snps
                .iter()
                .map(|&j| {
                    let sd = cfg.effect_variance(mafs[j]).sqrt();
                    Normal::new(0.0, sd)
                        .map(|d| d.sample(&mut main))
                        .map_err(|e| GpaError::Numerical(format!("effect distribution: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(TraitModel::new(snps, effects, &mafs))
        })
        .collect::<Result<_>>()?;

    let causal: Vec<Vec<bool>> = models
        .iter()
        .map(|t| {
            let mut v = vec![false; m_total];
            for &j in &t.snps {
                v[j] = true;
            }
            v
        })
        .collect();
    let n_shared = (0..m_total).filter(|&j| causal.iter().all(|c| c[j])).count();
    let annotation: Vec<bool> = (0..m_total)
        .map(|j| {
            let q = if causal.iter().any(|c| c[j]) { cfg.q1 } else { cfg.q0 };
            main.random::<f64>() < q
        })
        .collect();

    let mut pvals = Array2::zeros((m_total, models.len()));
    let mut case_fraction = Vec::new();
    let mut cohort_size = Vec::new();
    for (t, model) in models.iter().enumerate() {
        let (tables, frac, size) = simulate_trait(cfg, model, &mafs, key, t, &mut main)?;
        case_fraction.push(frac);
        cohort_size.push(size);
        let column: Vec<f64> = tables.par_iter().map(|tab| clamp_pvalue(assoc_test_1df(tab)).0).collect();
        for (j, p) in column.into_iter().enumerate() {
            pvals[[j, t]] = p;
        }
    }

    let snp_ids: Vec<String> = (1..=m_total).map(|j| format!("snp{j}")).collect();
    let labels = (1..=models.len()).map(|t| format!("trait{t}")).collect();
    let pvalues = PValueMatrix::new(snp_ids.clone(), pvals, labels)?;
    let ann = Array2::from_shape_fn((m_total, 1), |(j, _)| u8::from(annotation[j]));
    let annotation_matrix = AnnotationMatrix::new(snp_ids, ann, vec!["annotation".into()])?;
    let effects = models
        .iter()
        .map(|t| t.snps.iter().copied().zip(t.effects.iter().copied()).collect())
        .collect();
    Ok(SimData {
        pvalues,
        annotation: annotation_matrix,
        truth: SimTruth {
            causal,
            annotation,
            effects,
            mafs,
            n_shared,
            case_fraction,
            cohort_size,
        },
    })
}
