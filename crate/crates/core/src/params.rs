use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters of the billiard in units where the Keplerian
/// coefficient is one: `V(z) = -1/|z| - beta/|z|^2`, wall at `y = -l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Energy, strictly positive.
    pub h: f64,
    /// Distance from the centre to the wall.
    pub l: f64,
    /// Coefficient of the inverse-square term.
    pub beta: f64,
}

impl Params {
    pub fn new(h: f64, l: f64, beta: f64) -> Result<Self> {
        let p = Params { h, l, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::domain(format!("energy must be positive, got {}", self.h)));
        }
        if !(self.l.is_finite() && self.l > 0.0) {
            return Err(Error::domain(format!("wall distance must be positive, got {}", self.l)));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::domain(format!("beta must be non-negative, got {}", self.beta)));
        }
        Ok(())
    }

    /// Same energy and wall, different `beta`.
    pub fn with_beta(&self, beta: f64) -> Self {
        Params { beta, ..*self }
    }

    /// `beta_1 = L^2 h`, the cap on `beta` used when bounding tangent momenta.
    pub fn beta_cap(&self) -> f64 {
        self.l * self.l * self.h
    }
}

/// Result of [`normalize`]: dimensionless parameters plus the scales needed
/// to map them back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub params: Params,
    /// Physical length of one normalized length unit.
    pub length_scale: f64,
    /// Physical duration of one normalized time unit.
    pub time_scale: f64,
}

impl Normalization {
    /// Recover `(alpha, beta, l, h)` in physical units.
    pub fn denormalize(&self) -> (f64, f64, f64, f64) {
        let a = self.length_scale;
        let b2 = self.time_scale * self.time_scale;
        let alpha = a.powi(3) / b2;
        let beta = self.params.beta * a.powi(4) / b2;
        let l = self.params.l * a;
        let h = self.params.h * a * a / b2;
        (alpha, beta, l, h)
    }
}

/// Rescale space by `L` and time by `sqrt(L^3/alpha)` so that the Keplerian
/// coefficient and the wall distance become one.
///
/// The remaining parameters are `h~ = hL/alpha` and `beta~ = beta/(L alpha)`.
/// When `alpha = L h` this is the fully normalized system with `h~ = 1`.
pub fn normalize(alpha: f64, beta: f64, l: f64, h: f64) -> Result<Normalization> {
    for (name, v) in [("alpha", alpha), ("L", l), ("h", h)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::domain(format!("{name} must be positive, got {v}")));
        }
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::domain(format!("beta must be non-negative, got {beta}")));
    }
    let length_scale = l;
    let time_scale = (l.powi(3) / alpha).sqrt();
    let params = Params::new(h * l / alpha, 1.0, beta / (l * alpha))?;
    Ok(Normalization { params, length_scale, time_scale })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_case() {
        let n = normalize(1.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(n.params, Params { h: 1.0, l: 1.0, beta: 0.0 });
    }

    #[test]
    fn strong_force_coefficient_rescaled() {
        let n = normalize(2.0, 0.2, 1.0, 2.0).unwrap();
        assert!((n.params.beta - 0.1).abs() < 1e-15);
        assert!((n.params.h - 1.0).abs() < 1e-15);
        assert!((n.params.l - 1.0).abs() < 1e-15);
        // alpha~ = alpha b^2 / a^3 must be one
        let alpha_tilde = 2.0 * n.time_scale.powi(2) / n.length_scale.powi(3);
        assert!((alpha_tilde - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_wall_rejected() {
        assert!(matches!(normalize(1.0, 0.0, 0.0, 1.0), Err(Error::Domain(_))));
        assert!(normalize(-1.0, 0.0, 1.0, 1.0).is_err());
        assert!(normalize(1.0, -0.1, 1.0, 1.0).is_err());
    }

    #[test]
    fn round_trip_recovers_inputs() {
        for &(a, b, l, h) in &[(1.0, 0.3, 2.0, 0.7), (3.5, 0.0, 0.4, 12.0), (0.2, 1.1, 5.0, 0.01)] {
            let (a2, b2, l2, h2) = normalize(a, b, l, h).unwrap().denormalize();
            for (x, y) in [(a, a2), (b, b2), (l, l2), (h, h2)] {
                assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}");
            }
        }
    }
}
