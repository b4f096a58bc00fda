//! The ReLU dual function `f(c) = (c asin c + sqrt(1 - c^2)) / pi + c / 2`,
//! i.e. `2 E[relu(Z1) relu(c Z1 + sqrt(1 - c^2) Z2)]` for independent standard
//! normals. It maps the correlation of two pre-activations to the normalized
//! covariance of their post-activations.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Slack accepted beyond `[-1, 1]` before an argument is rejected.
pub const CORRELATION_SLACK: f64 = 1e-9;

/// Clamps a correlation into `[-1, 1]`; the flag is set when the input
/// overshoots by more than [`CORRELATION_SLACK`].
#[inline]
pub fn clamp_correlation(c: f64) -> (f64, bool) {
    if c > 1.0 {
        (1.0, c > 1.0 + CORRELATION_SLACK)
    } else if c < -1.0 {
        (-1.0, c < -1.0 - CORRELATION_SLACK)
    } else {
        (c, false)
    }
}

/// `f` on an argument already known to lie in `[-1, 1]`.
#[inline]
pub fn relu_dual_unchecked(c: f64) -> f64 {
    (c * c.asin() + (1.0 - c * c).max(0.0).sqrt()) / PI + 0.5 * c
}

pub fn relu_dual(c: f64) -> Result<f64> {
    if c.is_nan() || c.abs() > 1.0 + CORRELATION_SLACK {
        return Err(Error::domain(format!(
            "relu_dual needs |c| <= 1, got {c}"
        )));
    }
    Ok(relu_dual_unchecked(c.clamp(-1.0, 1.0)))
}

/// `f'(c) = asin(c) / pi + 1/2` on the open interval.
pub fn relu_dual_prime(c: f64) -> Result<f64> {
    if c.is_nan() || c.abs() >= 1.0 {
        return Err(Error::domain(format!(
            "relu_dual_prime needs |c| < 1, got {c} (use relu_dual_prime_closed for endpoint limits)"
        )));
    }
    Ok(c.asin() / PI + 0.5)
}

/// `f'` extended to the closed interval by its one-sided limits (0 at -1, 1 at 1).
pub fn relu_dual_prime_closed(c: f64) -> Result<f64> {
    if c.is_nan() || c.abs() > 1.0 + CORRELATION_SLACK {
        return Err(Error::domain(format!("need |c| <= 1, got {c}")));
    }
    Ok(c.clamp(-1.0, 1.0).asin() / PI + 0.5)
}
