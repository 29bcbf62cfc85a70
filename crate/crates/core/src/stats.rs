//! Small statistics helpers for the Monte Carlo harnesses.

/// Two-sided standard normal quantile for 95% coverage.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Smallest sample value `λ` such that at most `fraction` of the samples
/// exceed it.
///
/// `sorted` must be ascending and non-empty.
pub fn upper_tail_threshold(sorted: &[f64], fraction: f64) -> f64 {
    let n = sorted.len();
    // The nudge keeps products like 0.01 * 2000 from rounding up a rank.
    let keep = ((1.0 - fraction) * n as f64 - 1e-9).ceil() as usize;
    sorted[keep.clamp(1, n) - 1]
}

/// Distribution-free confidence interval for the median via order
/// statistics: ranks `(lo, hi)` (0-based) of an ascending sample such that
/// `P(x_(lo) <= median <= x_(hi)) >= 0.95`, using the normal approximation
/// to Binomial(n, 1/2).
pub fn median_ci_ranks(n: usize) -> (usize, usize) {
    if n == 0 {
        return (0, 0);
    }
    let half_width = Z_95 * (n as f64).sqrt() / 2.0;
    let lo = ((n as f64 / 2.0 - half_width).floor().max(0.0)) as usize;
    let hi = ((n as f64 / 2.0 + half_width).ceil() as usize).min(n - 1);
    (lo.min(n - 1), hi)
}

/// Lower median (element `⌈n/2⌉ - 1`) of an ascending sample.
pub fn lower_median(sorted: &[f64]) -> f64 {
    sorted[(sorted.len() + 1) / 2 - 1]
}
