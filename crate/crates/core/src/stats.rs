//! Small statistical helpers shared across modules.
//!
//! The empirical quantile convention is fixed project-wide: the lower
//! empirical inverse CDF, i.e. the order statistic at 1-based index
//! ceil(q·n). Both the proxy validation tables and every required-capital
//! constraint use this same convention so that cross-module comparisons
//! never mix quantile definitions.

/// Lower empirical inverse CDF: order statistic at index ceil(q·n), 1-based,
/// clamped into [1, n]. `sample` need not be sorted.
///
/// Panics on an empty sample (callers validate non-emptiness as a
/// precondition; an empty sample has no quantiles).
pub fn empirical_quantile(sample: &[f64], q: f64) -> f64 {
    assert!(!sample.is_empty(), "quantile of empty sample");
    let mut sorted = sample.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    sorted_quantile(&sorted, q)
}

/// Same convention on an already ascending-sorted sample (no copy).
pub fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    sorted[quantile_index(q, sorted.len()) - 1]
}

/// 1-based order-statistic index ceil(q·n), clamped into [1, n], with a
/// guard against representation slop: q values such as 1 − 0.995 carry a
/// relative error near 1e-16, which would push a mathematically integer
/// q·n (e.g. 0.005·1000 = 5) just above the integer and ceil it one order
/// statistic too high. Shaving 1e-12 relative — a thousandfold that slop,
/// yet far below any statistically meaningful distinction between adjacent
/// quantile levels — lands exact products on their integer while leaving
/// genuinely fractional products untouched.
pub fn quantile_index(q: f64, n: usize) -> usize {
    let scaled = q * n as f64;
    let guarded = scaled - scaled.abs() * 1e-12;
    (guarded.ceil() as usize).clamp(1, n)
}

/// Sample mean.
pub fn mean(sample: &[f64]) -> f64 {
    sample.iter().sum::<f64>() / sample.len() as f64
}

/// Unbiased sample variance (divisor n−1). Returns 0 for n < 2.
pub fn sample_variance(sample: &[f64]) -> f64 {
    let n = sample.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(sample);
    sample.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Population variance (divisor n). Used where a variance is a descriptive
/// moment of a fixed finite sample (e.g. explained variance of fitted values).
pub fn population_variance(sample: &[f64]) -> f64 {
    let n = sample.len();
    if n == 0 {
        return 0.0;
    }
    let m = mean(sample);
    sample.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64
}

/// Standard error of the sample mean: sqrt(s²/n).
pub fn standard_error_of_mean(sample: &[f64]) -> f64 {
    (sample_variance(sample) / sample.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_is_the_ceil_order_statistic() {
        let sample = [5.0, 1.0, 3.0, 2.0, 4.0];
        // ceil(0.5·5) = 3 → third order statistic.
        assert_eq!(empirical_quantile(&sample, 0.5), 3.0);
        // ceil(0.2·5) = 1 → minimum.
        assert_eq!(empirical_quantile(&sample, 0.2), 1.0);
        // ceil(0.21·5) = 2.
        assert_eq!(empirical_quantile(&sample, 0.21), 2.0);
        // q = 1 → maximum.
        assert_eq!(empirical_quantile(&sample, 1.0), 5.0);
        // q = 0 clamps to the first order statistic.
        assert_eq!(empirical_quantile(&sample, 0.0), 1.0);
    }

    #[test]
    fn quantile_index_is_exact_where_the_product_is_an_integer() {
        // 1 − 0.995 = 0.005000000000000004 in f64; naive ceil over-shoots.
        assert_eq!(quantile_index(1.0 - 0.995, 1000), 5);
        assert_eq!(quantile_index(0.005, 1000), 5);
        assert_eq!(quantile_index(0.15, 200), 30);
        assert_eq!(quantile_index(0.9, 50), 45);
        // Genuinely fractional products still round up.
        assert_eq!(quantile_index(0.21, 5), 2);
        assert_eq!(quantile_index(0.751, 8), 7);
        // Clamping at the ends.
        assert_eq!(quantile_index(0.0, 7), 1);
        assert_eq!(quantile_index(1.0, 7), 7);
    }

    #[test]
    fn quantile_handles_infinities() {
        let sample = [f64::NEG_INFINITY, 0.0, 1.0, 2.0];
        assert_eq!(empirical_quantile(&sample, 0.25), f64::NEG_INFINITY);
        assert_eq!(empirical_quantile(&sample, 1.0), 2.0);
    }

    #[test]
    fn variance_matches_hand_computation() {
        let sample = [1.0, 2.0, 3.0, 4.0];
        // mean 2.5, squared deviations 2.25+0.25+0.25+2.25 = 5.
        assert!((sample_variance(&sample) - 5.0 / 3.0).abs() < 1e-15);
        assert!((population_variance(&sample) - 1.25).abs() < 1e-15);
    }
}
