//! Sampling directly from the GPA mixture.

use ndarray::Array2;
use rand::Rng;

use crate::error::Result;
use crate::model::{AnnotationMatrix, GpaParams, PValueMatrix, P_FLOOR};

#[derive(Debug, Clone)]
pub struct ModelSample {
    pub pvalues: PValueMatrix,
    /// Present when the parameters carry an annotation block.
    pub annotation: Option<AnnotationMatrix>,
    /// Association state index of each SNP.
    pub states: Vec<usize>,
}

/// Draws `n_snps` SNPs: a state from `pi`, Uniform p-values for null studies,
/// Beta(alpha_k, 1) p-values for associated ones and Bernoulli(q[d][state])
/// annotations.
pub fn sample_model<R: Rng + ?Sized>(params: &GpaParams, n_snps: usize, rng: &mut R) -> Result<ModelSample> {
    params.validate()?;
    let k = params.n_studies();
    let d = params.n_annotations();
    let mut cumulative = params.pi.clone();
    for l in 1..cumulative.len() {
        cumulative[l] += cumulative[l - 1];
    }
    let mut states = Vec::with_capacity(n_snps);
    let mut p = Array2::zeros((n_snps, k));
    let mut a = Array2::<u8>::zeros((n_snps, d));
    for j in 0..n_snps {
        let u: f64 = rng.random();
        let state = cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(cumulative.len() - 1);
        states.push(state);
        for kk in 0..k {
            // (0, 1]
            let u = 1.0 - rng.random::<f64>();
            let value = if state >> kk & 1 == 1 {
                u.powf(1.0 / params.alpha[kk])
            } else {
                u
            };
            p[[j, kk]] = value.max(P_FLOOR);
        }
        for dd in 0..d {
            a[[j, dd]] = u8::from(rng.random::<f64>() < params.q[dd][state]);
        }
    }
    let pvalues = PValueMatrix::from_values(p)?;
    let annotation = if d > 0 {
        Some(AnnotationMatrix::aligned_to(&pvalues, a)?)
    } else {
        None
    };
    Ok(ModelSample {
        pvalues,
        annotation,
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn state_frequencies_and_beta_mean() {
        let params = GpaParams {
            pi: vec![0.5, 0.2, 0.2, 0.1],
            alpha: vec![0.25, 0.5],
            q: vec![vec![0.1, 0.2, 0.3, 0.9]],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = sample_model(&params, 200_000, &mut rng).unwrap();
        let m = s.states.len() as f64;
        for (l, &pi) in params.pi.iter().enumerate() {
            let f = s.states.iter().filter(|&&x| x == l).count() as f64 / m;
            assert!((f - pi).abs() < 0.005);
        }
        // E[-log P] = 1/alpha under Beta(alpha, 1)
        let (mut sum, mut n) = (0.0, 0.0);
        for (j, &st) in s.states.iter().enumerate() {
            if st & 1 == 1 {
                sum -= s.pvalues.values()[[j, 0]].ln();
                n += 1.0;
            }
        }
        assert!((sum / n - 4.0).abs() < 0.05);
        let ann = s.annotation.unwrap();
        let (mut hits, mut total) = (0.0, 0.0);
        for (j, &st) in s.states.iter().enumerate() {
            if st == 3 {
                hits += f64::from(ann.values()[[j, 0]]);
                total += 1.0;
            }
        }
        assert!((hits / total - 0.9).abs() < 0.01);
    }
}
