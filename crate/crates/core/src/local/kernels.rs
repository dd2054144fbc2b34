//! Distance weighting kernels for local regression.

use crate::error::{Error, Result};

/// Gaussian weight `exp(-d^2 / h^2)`.
pub fn gaussian_weight(d: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Parameter(format!("bandwidth must be positive, got {h}")));
    }
    if !(d >= 0.0) {
        return Err(Error::Parameter(format!("distance must be non-negative, got {d}")));
    }
    let r = d / h;
    Ok((-r * r).exp())
}

/// Tricube weight `(1 - u^3)^3` on `[0, 1)`, zero beyond.
pub fn tricube_weight(u: f64) -> f64 {
    if (0.0..1.0).contains(&u) {
        let t = 1.0 - u * u * u;
        t * t * t
    } else {
        0.0
    }
}
