use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::descriptive::{percentile_sorted, sample_sd, sort_values};
use crate::error::{Error, Result};

pub const DEFAULT_ITERATIONS: usize = 1000;
pub const DEFAULT_SEED: u64 = 20240601;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    /// Statistic on the full sample.
    pub point: f64,
    /// Standard deviation of the resample statistics.
    pub sd: f64,
    /// Percentile interval (2.5, 97.5).
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub half_width: f64,
    pub median: f64,
    pub iterations: usize,
    /// Resamples whose statistic was finite; the others are left out of sd
    /// and the interval.
    pub valid_iterations: usize,
    pub seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of resample `i`; independent of thread scheduling.
pub fn iteration_seed(seed: u64, i: u64) -> u64 {
    splitmix64(seed ^ splitmix64(i))
}

/// Case-level bootstrap: each resample draws `items.len()` cases with
/// replacement and applies `statistic`.
pub fn bootstrap<T, F>(items: &[T], statistic: F, iterations: usize, seed: u64) -> Result<BootstrapSummary>
where
    T: Clone + Sync,
    F: Fn(&[T]) -> f64 + Sync,
{
    let n = items.len();
    if n < 2 {
        return Err(Error::SampleSize { needed: 2, got: n });
    }
    if iterations == 0 {
        return Err(Error::Validation("bootstrap needs at least one iteration".into()));
    }
    let point = statistic(items);
    let stats: Vec<f64> = (0..iterations as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(iteration_seed(seed, i));
            let resample: Vec<T> = (0..n).map(|_| items[rng.random_range(0..n)].clone()).collect();
            statistic(&resample)
        })
        .collect();
    let mut finite: Vec<f64> = stats.into_iter().filter(|s| s.is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::Degenerate("bootstrap statistic undefined on every resample".into()));
    }
    sort_values(&mut finite);
    let all_equal = finite.iter().all(|&s| s == finite[0]);
    let sd = if all_equal { 0.0 } else { sample_sd(&finite) };
    let ci_lo = percentile_sorted(&finite, 2.5);
    let ci_hi = percentile_sorted(&finite, 97.5);
    Ok(BootstrapSummary {
        point,
        sd,
        ci_lo,
        ci_hi,
        half_width: (ci_hi - ci_lo) / 2.0,
        median: percentile_sorted(&finite, 50.0),
        iterations,
        valid_iterations: finite.len(),
        seed,
    })
}
