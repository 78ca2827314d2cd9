//! One-degree-of-freedom χ² distribution and Gaussian helpers.

use core::f64::consts::PI;

use libm::{erf, exp, log, sqrt};

/// χ²₁ CDF, `F(d²) = erf(sqrt(d²/2))`. Negative input maps to 0.
pub fn chi2_cdf(d2: f64) -> f64 {
    if d2 <= 0.0 {
        return 0.0;
    }
    erf(sqrt(0.5 * d2))
}

/// Inverse χ²₁ CDF by bisection; `p = 1` yields `f64::INFINITY`.
///
/// Panics if `p` lies outside `[0, 1]`.
pub fn chi2_inv(p: f64) -> f64 {
    assert!((0.0..=1.0).contains(&p), "probability out of range: {p}");
    if p == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let mut hi = 1.0;
    while chi2_cdf(hi) < p {
        hi *= 2.0;
        if hi > 1e4 {
            // erf saturates to 1 in double precision well before this
            return hi;
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Log of the scalar normal density with variance `variance` at squared
/// Mahalanobis distance `d2`.
pub fn gaussian_log_density(d2: f64, variance: f64) -> f64 {
    -0.5 * log(2.0 * PI * variance) - 0.5 * d2
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / core::f64::consts::SQRT_2))
}

/// Scalar normal density.
pub fn gaussian_density(d2: f64, variance: f64) -> f64 {
    exp(gaussian_log_density(d2, variance))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cdf_by_bisection_oracle(p: f64) -> f64 {
        // independent route: integrate the χ²₁ density with Simpson's rule in
        // the substitution d² = s², density 2 φ(s) ds
        let target = p;
        let (mut lo, mut hi) = (0.0f64, 10.0f64);
        let integral = |x: f64| {
            let n = 4000;
            let h = x / n as f64;
            let f = |s: f64| 2.0 * (-(s * s) / 2.0).exp() / (2.0 * PI).sqrt();
            let mut acc = f(0.0) + f(x);
            for k in 1..n {
                acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
            }
            acc * h / 3.0
        };
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if integral(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        s * s
    }

    #[test]
    fn cdf_at_zero() {
        assert_eq!(chi2_cdf(0.0), 0.0);
    }

    #[test]
    fn ninety_five_percent_point() {
        let q = chi2_inv(0.95);
        assert!((q - 3.841_458_820_694_124).abs() < 1e-9, "{q}");
        assert!((q - cdf_by_bisection_oracle(0.95)).abs() < 1e-8);
    }

    #[test]
    fn inverse_consistency() {
        for k in 1..200 {
            let p = k as f64 / 200.0;
            assert!((chi2_cdf(chi2_inv(p)) - p).abs() < 1e-10, "p = {p}");
        }
        for p in [0.99, 0.999, 0.999_999] {
            assert!((chi2_cdf(chi2_inv(p)) - p).abs() < 1e-10);
        }
        assert_eq!(chi2_inv(1.0), f64::INFINITY);
    }

    #[test]
    fn large_distance_is_almost_certain() {
        assert!(chi2_cdf(400.0) > 0.999_999);
    }
}
