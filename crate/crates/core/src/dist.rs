//! Scalar log-densities used by the model and the sampler.
//!
//! All functions return the log of a properly normalised density. Support
//! violations return `f64::NEG_INFINITY` rather than an error so they can be
//! used directly inside Metropolis ratios.

/// ln(2 * pi)
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log-density of N(mean, sd^2) at `x`. Requires `sd > 0`.
#[inline]
pub fn normal_lpdf(x: f64, mean: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let z = (x - mean) / sd;
    -0.5 * (LN_2PI + z * z) - sd.ln()
}

/// Log-density of the Laplace distribution with location 0 and scale `b`.
#[inline]
pub fn laplace_lpdf(x: f64, scale: f64) -> f64 {
    if scale <= 0.0 {
        return f64::NEG_INFINITY;
    }
    -(2.0 * scale).ln() - x.abs() / scale
}

/// Log-density of the half-Cauchy distribution on (0, inf) with the given
/// scale: f(x) = 2 / (pi * s * (1 + (x/s)^2)).
#[inline]
pub fn half_cauchy_lpdf(x: f64, scale: f64) -> f64 {
    if x <= 0.0 || scale <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let r = x / scale;
    (2.0 / std::f64::consts::PI).ln() - scale.ln() - (1.0 + r * r).ln()
}

/// Log-density of the uniform distribution on (-1, 1).
#[inline]
pub fn uniform_pm1_lpdf(x: f64) -> f64 {
    if x > -1.0 && x < 1.0 {
        -(2.0f64).ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Log-density of Exp(rate) at `x >= 0`.
#[inline]
pub fn exponential_lpdf(x: f64, rate: f64) -> f64 {
    if x < 0.0 || rate <= 0.0 {
        return f64::NEG_INFINITY;
    }
    rate.ln() - rate * x
}

/// Quantile of the half-Cauchy distribution: x(p) = s * tan(pi * p / 2).
#[inline]
pub fn half_cauchy_quantile(p: f64, scale: f64) -> f64 {
    scale * (std::f64::consts::FRAC_PI_2 * p).tan()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn normal_matches_reference_values() {
        // Standard normal at 0: -0.5 * ln(2 pi)
        assert_abs_diff_eq!(normal_lpdf(0.0, 0.0, 1.0), -0.918_938_533_204_672_7, epsilon = 1e-12);
        // N(1, 2^2) at 3: z = 1
        assert_abs_diff_eq!(
            normal_lpdf(3.0, 1.0, 2.0),
            -0.5 * (LN_2PI + 1.0) - 2.0f64.ln(),
            epsilon = 1e-12
        );
        assert_eq!(normal_lpdf(0.0, 0.0, 0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn laplace_matches_closed_form() {
        // At the mode the density is 1 / (2b).
        let b = 1.7;
        assert_abs_diff_eq!(laplace_lpdf(0.0, b), (1.0 / (2.0 * b)).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            laplace_lpdf(-2.0, b),
            (1.0 / (2.0 * b)).ln() - 2.0 / b,
            epsilon = 1e-12
        );
    }

    #[test]
    fn half_cauchy_integrates_on_positive_axis() {
        // Trapezoid quadrature of exp(lpdf) over a wide range should be ~1.
        let scale = 2.0;
        let (a, b, n) = (1e-9, 4000.0, 4_000_000);
        let h = (b - a) / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            let x = a + h * i as f64;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            total += w * half_cauchy_lpdf(x, scale).exp();
        }
        total *= h;
        assert!((total - 1.0).abs() < 1e-3, "integral {total}");
        assert_eq!(half_cauchy_lpdf(-1.0, scale), f64::NEG_INFINITY);
        assert_eq!(half_cauchy_lpdf(0.0, scale), f64::NEG_INFINITY);
    }

    #[test]
    fn half_cauchy_quantile_inverts_cdf() {
        // CDF of half-Cauchy: (2/pi) atan(x/s).
        let scale = 5.0;
        for &p in &[0.1, 0.5, 0.9] {
            let x = half_cauchy_quantile(p, scale);
            let cdf = (2.0 / std::f64::consts::PI) * (x / scale).atan();
            assert_abs_diff_eq!(cdf, p, epsilon = 1e-12);
        }
    }

    #[test]
    fn exponential_matches_closed_form() {
        assert_abs_diff_eq!(exponential_lpdf(0.0, 3.0), 3.0f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(exponential_lpdf(2.0, 0.5), 0.5f64.ln() - 1.0, epsilon = 1e-12);
        assert_eq!(exponential_lpdf(-0.1, 1.0), f64::NEG_INFINITY);
    }
}
