//! Fixtures shared by the benchmarks.

use gpa_core::sim::sample_model;
use gpa_core::{AnnotationMatrix, GpaParams, PValueMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Two studies and one annotation sampled from a fixed parameter set.
pub fn two_study_fixture(n_snps: usize, seed: u64) -> (PValueMatrix, AnnotationMatrix) {
    let params = GpaParams {
        pi: vec![0.8, 0.05, 0.05, 0.1],
        alpha: vec![0.4, 0.6],
        q: vec![vec![0.1, 0.25, 0.25, 0.4]],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = sample_model(&params, n_snps, &mut rng).expect("valid fixture parameters");
    (s.pvalues, s.annotation.expect("fixture has an annotation"))
}
