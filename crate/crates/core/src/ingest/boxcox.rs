//! Box-Cox power transform with maximum-likelihood exponent selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Search interval for the transform exponent.
pub const LAMBDA_RANGE: (f64, f64) = (-2.0, 2.0);
/// Convergence tolerance (in lambda) of the golden-section search.
pub const LAMBDA_TOL: f64 = 1e-4;

/// A fitted Box-Cox transform.
///
/// `forward` maps original (strictly positive) values onto the transformed
/// scale; `inverse` maps back. The pair round-trips for any value in the image
/// of `forward`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxCoxState {
    /// Transform exponent.
    pub lambda: f64,
}

impl BoxCoxState {
    /// y = (x^lambda - 1) / lambda, or ln(x) when lambda = 0.
    pub fn forward(&self, x: f64) -> f64 {
        if self.lambda == 0.0 {
            x.ln()
        } else {
            // expm1 keeps precision for small |lambda|.
            f64::exp_m1(self.lambda * x.ln()) / self.lambda
        }
    }

    /// Inverse transform. Values outside the image of `forward` saturate to
    /// the boundary limits (0 or +inf) instead of producing NaN; this can
    /// happen for extreme posterior quantiles mapped back to original units.
    pub fn inverse(&self, y: f64) -> f64 {
        if self.lambda == 0.0 {
            return y.exp();
        }
        let u = self.lambda * y;
        if u <= -1.0 {
            return if self.lambda < 0.0 { f64::INFINITY } else { 0.0 };
        }
        (f64::ln_1p(u) / self.lambda).exp()
    }
}

/// Profile log-likelihood of the exponent under a Gaussian model for the
/// transformed values: -(n/2) ln(sigma_mle^2) + (lambda - 1) sum(ln x).
pub(crate) fn profile_loglik(values: &[f64], lambda: f64) -> f64 {
    let n = values.len() as f64;
    let state = BoxCoxState { lambda };
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut sum_ln = 0.0;
    for &x in values {
        let y = state.forward(x);
        sum += y;
        sum_sq += y * y;
        sum_ln += x.ln();
    }
    let mean = sum / n;
    let var_mle = (sum_sq / n - mean * mean).max(f64::MIN_POSITIVE);
    -0.5 * n * var_mle.ln() + (lambda - 1.0) * sum_ln
}

/// Fit the transform exponent by maximising the profile log-likelihood over
/// [-2, 2] with a golden-section search (tolerance 1e-4).
///
/// Errors if any value is non-positive or if there are fewer than two values.
pub fn fit_boxcox(values: &[f64]) -> Result<BoxCoxState> {
    if values.len() < 2 {
        return Err(Error::Data(
            "Box-Cox fit requires at least two values".into(),
        ));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v <= 0.0) {
        return Err(Error::Data(format!(
            "Box-Cox transform requires strictly positive values, found {bad}"
        )));
    }

    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = LAMBDA_RANGE;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = profile_loglik(values, c);
    let mut fd = profile_loglik(values, d);
    while (b - a) > LAMBDA_TOL {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = profile_loglik(values, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = profile_loglik(values, d);
        }
    }
    Ok(BoxCoxState {
        lambda: 0.5 * (a + b),
    })
}
