//! Deterministic chunked reductions over SNP rows.
//!
//! Rows are split into fixed-size chunks, each chunk is accumulated
//! sequentially, and the per-chunk partials are combined with a fixed
//! pairwise tree. The summation order therefore depends only on the number
//! of rows and the chunk size, never on the number of worker threads.

use rayon::prelude::*;

pub const DEFAULT_CHUNK_SIZE: usize = 4096;

/// Sums `width` accumulators over `n_rows` rows.
///
/// `accumulate` receives a row range and a zeroed accumulator slice of
/// length `width` and adds the contribution of those rows.
pub fn chunked_sum<F>(n_rows: usize, chunk_size: usize, width: usize, accumulate: F) -> Vec<f64>
where
    F: Fn(std::ops::Range<usize>, &mut [f64]) + Sync,
{
    let chunk_size = chunk_size.max(1);
    let n_chunks = n_rows.div_ceil(chunk_size);
    let partials: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * chunk_size;
            let end = (start + chunk_size).min(n_rows);
            let mut acc = vec![0.0; width];
            accumulate(start..end, &mut acc);
            acc
        })
        .collect();
    pairwise_combine(partials, width)
}

pub(crate) fn pairwise_combine(mut parts: Vec<Vec<f64>>, width: usize) -> Vec<f64> {
    if parts.is_empty() {
        return vec![0.0; width];
    }
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += *y;
                }
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap()
}

/// Pairwise sum of a slice, in the same chunked order as [`chunked_sum`].
pub fn stable_sum(values: &[f64], chunk_size: usize) -> f64 {
    chunked_sum(values.len(), chunk_size, 1, |range, acc| {
        for v in &values[range] {
            acc[0] += *v;
        }
    })[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_sums_to_zero() {
        assert_eq!(chunked_sum(0, 8, 3, |_, _| {}), vec![0.0; 3]);
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let values: Vec<f64> = (0..100_003).map(|i| ((i as f64) * 0.7).sin() * 1e3).collect();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| stable_sum(&values, 1000));
        let b = four.install(|| stable_sum(&values, 1000));
        assert_eq!(a.to_bits(), b.to_bits());
        let naive: f64 = values.iter().sum();
        assert!((a - naive).abs() < 1e-6);
    }
}
