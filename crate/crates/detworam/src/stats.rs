//! Small statistics helpers for the Monte-Carlo and uniformity checks.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Two-sided 99% standard normal quantile.
pub const Z99: f64 = 2.575_829_303_548_901;

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Newcombe's hybrid score interval for `p0 - p1`, built from the two
/// Wilson intervals.
pub fn newcombe_diff(x0: u64, n0: u64, x1: u64, n1: u64, z: f64) -> (f64, f64) {
    let p0 = x0 as f64 / n0.max(1) as f64;
    let p1 = x1 as f64 / n1.max(1) as f64;
    let (l0, u0) = wilson(x0, n0, z);
    let (l1, u1) = wilson(x1, n1, z);
    let d = p0 - p1;
    let lo = d - ((p0 - l0).powi(2) + (u1 - p1).powi(2)).sqrt();
    let hi = d + ((u0 - p0).powi(2) + (p1 - l1).powi(2)).sqrt();
    (lo, hi)
}

/// Pearson chi-square statistic and p-value of `counts` against the uniform
/// distribution over its bins.
pub fn chi_square_uniform(counts: &[u64]) -> (f64, f64) {
    let total: u64 = counts.iter().sum();
    let bins = counts.len();
    if bins < 2 || total == 0 {
        return (0.0, 1.0);
    }
    let expected = total as f64 / bins as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dist = ChiSquared::new((bins - 1) as f64).expect("positive degrees of freedom");
    (stat, 1.0 - dist.cdf(stat))
}
