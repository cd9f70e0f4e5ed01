//! Sample summaries used for inference.

/// Normal quantile used for the two-sided 95% Wald interval.
pub const Z_95: f64 = 1.96;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation with denominator `n - 1`; zero for `n < 2`.
pub fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    libm::sqrt(ss / (n - 1) as f64)
}

/// Mean and sample sd over `n` units of which only `values` are non-zero.
/// Accumulates raw moments so that the result does not depend on where the
/// zero units sit.
pub fn sparse_mean_sd(values: impl IntoIterator<Item = f64>, n: usize) -> (f64, f64) {
    let (mut s, mut ss) = (0.0, 0.0);
    for x in values {
        s += x;
        ss += x * x;
    }
    let nf = n as f64;
    let m = s / nf;
    let var = if n > 1 { ((ss - nf * m * m) / (nf - 1.0)).max(0.0) } else { 0.0 };
    (m, libm::sqrt(var))
}

/// Score-equation tolerance `max(1e-8, sigma / (sqrt(n) ln n))`.
pub fn score_tolerance(sigma: f64, n: usize) -> f64 {
    let n = n as f64;
    let scaled = sigma / (libm::sqrt(n) * libm::log(n));
    if scaled.is_finite() {
        scaled.max(1e-8)
    } else {
        1e-8
    }
}

/// `estimate ± Z_95 · sigma / sqrt(n)`.
pub fn wald_interval(estimate: f64, sigma: f64, n: usize) -> (f64, f64) {
    let half = Z_95 * sigma / libm::sqrt(n as f64);
    (estimate - half, estimate + half)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sd_of_small_sample() {
        // values 1..4: mean 2.5, ss 5, var 5/3
        assert!((sample_sd(&[1.0, 2.0, 3.0, 4.0]) - libm::sqrt(5.0 / 3.0)).abs() < 1e-15);
        assert_eq!(sample_sd(&[7.0]), 0.0);
    }

    #[test]
    fn sparse_moments_match_dense() {
        let dense = [0.0, 1.5, 0.0, -2.0, 3.0];
        let (m, sd) = sparse_mean_sd([1.5, -2.0, 3.0], 5);
        assert!((m - mean(&dense)).abs() < 1e-15);
        assert!((sd - sample_sd(&dense)).abs() < 1e-12);
    }

    #[test]
    fn tolerance_floor() {
        assert_eq!(score_tolerance(0.0, 100), 1e-8);
        let t = score_tolerance(2.0, 100);
        assert!((t - 2.0 / (10.0 * libm::log(100.0))).abs() < 1e-15);
    }

    #[test]
    fn wald_is_symmetric() {
        let (lo, hi) = wald_interval(1.0, 2.0, 4);
        assert_eq!((lo, hi), (1.0 - 1.96, 1.0 + 1.96));
    }
}
