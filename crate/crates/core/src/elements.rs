//! Closed-form geometry of a single ballistic arc.
//!
//! Between two reflections the particle moves in a central field, so `C` and
//! `h` are conserved. With `u = 1/r` the orbit equation becomes
//! `u'' + gamma^2 u = 1/C^2`, `gamma = C'/|C|`, `C' = sqrt(C^2 - 2 beta)`, and
//! the trajectory is a Keplerian hyperbola in the rescaled angle
//! `nu = gamma * psi`:
//!
//! ```text
//! r(nu) = C'^2 / (1 + e cos nu),   e = sqrt(1 + 2 h C'^2),   |nu| < acos(-1/e)
//! ```
//!
//! Here `psi` is the polar angle measured from the pericentre in the direction
//! of motion. Because the radial motion is exactly the Kepler radial motion
//! with angular momentum `C'`, time follows from the hyperbolic anomaly `H`:
//! `r = a (e cosh H - 1)`, `t = a^{3/2} (e sinh H - H)`, `a = 1/(2h)`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Params;
use crate::potential::{angular_momentum, energy, potential, State, Vec2};

/// Relative tolerance on `|E - h|` accepted by [`orbit_elements`].
pub const ENERGY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitElements {
    /// Signed angular momentum.
    pub c: f64,
    /// Reduced momentum `sqrt(C^2 - 2 beta)`.
    pub c_prime: f64,
    /// Eccentricity of the conic in the rescaled angle.
    pub e: f64,
    pub r_min: f64,
    /// Precession factor `C'/|C|`, in `(0, 1]`.
    pub gamma: f64,
    /// Lifted polar angle of the pericentre.
    pub theta_peri: f64,
    /// `+1` for counter-clockwise motion, `-1` otherwise.
    pub direction: f64,
    pub h: f64,
    pub beta: f64,
}

impl OrbitElements {
    /// Elements of the orbit with angular momentum `c` whose pericentre sits
    /// at polar angle `theta_peri`.
    pub fn from_momentum(c: f64, theta_peri: f64, p: &Params) -> Result<Self> {
        let c2 = c * c;
        if c2 <= 2.0 * p.beta || c == 0.0 {
            return Err(Error::CollisionalOrbit { c_squared: c2, two_beta: 2.0 * p.beta });
        }
        let cp2 = c2 - 2.0 * p.beta;
        let c_prime = cp2.sqrt();
        let e = (1.0 + 2.0 * p.h * cp2).sqrt();
        let r_min = cp2 / (1.0 + e);
        Ok(OrbitElements {
            c,
            c_prime,
            e,
            r_min,
            gamma: c_prime / c.abs(),
            theta_peri,
            direction: c.signum(),
            h: p.h,
            beta: p.beta,
        })
    }

    /// `e - 1` without cancellation.
    pub fn e_minus_one(&self) -> f64 {
        2.0 * self.h * self.c_prime * self.c_prime / (self.e + 1.0)
    }

    /// Anomaly of the outgoing asymptote, `acos(-1/e) = pi/2 + asin(1/e)`.
    pub fn asymptote_anomaly(&self) -> f64 {
        FRAC_PI_2 + (1.0 / self.e).asin()
    }

    pub fn radius_at_anomaly(&self, nu: f64) -> f64 {
        self.c_prime * self.c_prime / (1.0 + self.e * nu.cos())
    }

    pub fn anomaly_at_angle(&self, theta: f64) -> f64 {
        self.gamma * self.direction * (theta - self.theta_peri)
    }

    pub fn angle_at_anomaly(&self, nu: f64) -> f64 {
        self.theta_peri + self.direction * nu / self.gamma
    }

    /// The radius function `r(theta)` on the lifted polar angle.
    pub fn radius_at(&self, theta: f64) -> f64 {
        self.radius_at_anomaly(self.anomaly_at_angle(theta))
    }

    /// Anomaly of a point on this orbit, from its position and velocity.
    pub fn anomaly_of(&self, s: &State) -> f64 {
        let r = s.pos.norm();
        let r_dot = s.pos.dot(&s.vel) / r;
        (self.c_prime * r_dot).atan2(self.c_prime * self.c_prime / r - 1.0)
    }

    pub fn state_at_anomaly(&self, nu: f64) -> State {
        let r = self.radius_at_anomaly(nu);
        let theta = self.angle_at_anomaly(nu);
        let (sin, cos) = theta.sin_cos();
        let r_dot = self.e * nu.sin() / self.c_prime;
        let v_t = self.c / r;
        State {
            pos: Vec2::new(r * cos, r * sin),
            vel: Vec2::new(r_dot * cos - v_t * sin, r_dot * sin + v_t * cos),
        }
    }

    /// Hyperbolic anomaly `H` matching the rescaled true anomaly `nu`.
    pub fn hyperbolic_anomaly(&self, nu: f64) -> f64 {
        let k = (self.e_minus_one() / (self.e + 1.0)).sqrt();
        2.0 * (k * (0.5 * nu).tan()).atanh()
    }

    /// Signed time since pericentre passage.
    pub fn time_at_anomaly(&self, nu: f64) -> f64 {
        let a = 0.5 / self.h;
        let big_h = self.hyperbolic_anomaly(nu);
        a * a.sqrt() * (self.e_minus_one() * big_h.sinh() + sinh_minus_identity(big_h))
    }
}

/// `sinh(x) - x`, accurate for small `x`.
fn sinh_minus_identity(x: f64) -> f64 {
    if x.abs() < 0.1 {
        let x2 = x * x;
        // x^3/3! + x^5/5! + ... ; terms up to x^13 reach machine precision here
        let mut term = x * x2 / 6.0;
        let mut sum = term;
        let mut n = 3.0;
        for _ in 0..6 {
            term *= x2 / ((n + 1.0) * (n + 2.0));
            sum += term;
            n += 2.0;
        }
        sum
    } else {
        x.sinh() - x
    }
}

/// Conic elements of the arc through `s`.
pub fn orbit_elements(s: &State, p: &Params) -> Result<OrbitElements> {
    let e_state = energy(s, p)?;
    let scale = p.h + potential(&s.pos, p)?.abs();
    if (e_state - p.h).abs() > ENERGY_TOLERANCE * scale {
        return Err(Error::domain(format!("state energy {e_state} differs from h = {}", p.h)));
    }
    let c = angular_momentum(s);
    let mut el = OrbitElements::from_momentum(c, 0.0, p)?;
    let nu = el.anomaly_of(s);
    let theta = s.pos.y.atan2(s.pos.x);
    el.theta_peri = theta - el.direction * nu / el.gamma;
    Ok(el)
}

/// Polar angle swept by a Kepler hyperbola from pericentre to infinity.
pub fn kepler_sweep_angle(h: f64, c_prime: f64) -> Result<f64> {
    if !(h > 0.0 && c_prime > 0.0) {
        return Err(Error::domain("kepler_sweep_angle needs h > 0 and C' > 0"));
    }
    let e = (1.0 + 2.0 * h * c_prime * c_prime).sqrt();
    Ok(FRAC_PI_2 + (1.0 / e).asin())
}

/// Polar angle swept from pericentre to infinity at angular momentum `c`:
/// the Kepler angle at `C'` stretched by `|C|/C'`.
pub fn max_sweep_angle(h: f64, beta: f64, c: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::domain("max_sweep_angle needs h > 0"));
    }
    let c2 = c * c;
    if c2 <= 2.0 * beta {
        return Err(Error::CollisionalOrbit { c_squared: c2, two_beta: 2.0 * beta });
    }
    let c_prime = (c2 - 2.0 * beta).sqrt();
    Ok(c.abs() / c_prime * kepler_sweep_angle(h, c_prime)?)
}

/// Time to travel from the pericentre out to radius `r1`.
pub fn travel_time(r1: f64, elems: &OrbitElements, p: &Params) -> Result<f64> {
    let h = p.h;
    let r_min = elems.r_min;
    if !(r1 >= r_min * (1.0 - 1e-12)) {
        return Err(Error::domain(format!("r1 = {r1} is below the pericentre {r_min}")));
    }
    let cp2 = elems.c_prime * elems.c_prime;
    let a = 0.5 * cp2;
    let radicand = (h * r1 * r1 + r1 - a).max(0.0);
    let ratio = ((2.0 * h * r1 + 1.0) / (2.0 * h * cp2 + 1.0).sqrt()).max(1.0);
    Ok(radicand.sqrt() / (std::f64::consts::SQRT_2 * h)
        - ratio.acosh() / (2.0 * std::f64::consts::SQRT_2 * h * h.sqrt()))
}

/// `C^2` of the orbit tangent to the wall at the point whose position vector
/// makes angle `phi` with the +x direction.
pub fn tangency_momentum(phi: f64, p: &Params) -> Result<f64> {
    if !(phi > 0.0 && phi < PI) {
        return Err(Error::domain(format!("phi = {phi} outside (0, pi)")));
    }
    let s = phi.sin();
    Ok(2.0 * p.h * p.l * p.l + 2.0 * p.l * s + 2.0 * p.beta * s * s)
}

/// Positive branch of the compact set holding `|C|` for wall-tangent orbits
/// with `beta <= L^2 h`.
pub fn momentum_range_k(p: &Params) -> (f64, f64) {
    let l2h = p.l * p.l * p.h;
    ((2.0 * l2h).sqrt(), (4.0 * l2h + 2.0 * p.l).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(h: f64, beta: f64) -> Params {
        Params { h, l: 1.0, beta }
    }

    #[test]
    fn pericentre_and_eccentricity() {
        let p = params(0.5, 0.0);
        let el = OrbitElements::from_momentum(1.0, 0.0, &p).unwrap();
        assert!((el.r_min - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        assert!((el.e - 2f64.sqrt()).abs() < 1e-15);
        // r_min from the quadratic h r^2 + r - C'^2/2 = 0
        let via_formula = (-1.0 + (1.0 + 2.0 * el.c_prime.powi(2) * p.h).sqrt()) / (2.0 * p.h);
        assert!((el.r_min - via_formula).abs() < 1e-15);
    }

    #[test]
    fn collisional_boundary() {
        let p = params(1.0, 0.5);
        assert!(matches!(
            OrbitElements::from_momentum(1.0, 0.0, &p),
            Err(Error::CollisionalOrbit { .. })
        ));
        let s = State::launch(0.0, FRAC_PI_2, &p).unwrap();
        assert!(matches!(orbit_elements(&s, &p), Err(Error::CollisionalOrbit { .. })));
    }

    #[test]
    fn elements_reproduce_state() {
        let p = params(0.8, 0.05);
        let s = State::launch(0.4, 1.1, &p).unwrap();
        let el = orbit_elements(&s, &p).unwrap();
        let theta = s.pos.y.atan2(s.pos.x);
        assert!((el.radius_at(theta) - s.pos.norm()).abs() < 1e-12);
        let back = el.state_at_anomaly(el.anomaly_of(&s));
        assert!((back.pos - s.pos).norm() < 1e-12);
        assert!((back.vel - s.vel).norm() < 1e-12);
    }

    #[test]
    fn energy_mismatch_rejected() {
        let p = params(1.0, 0.0);
        let s = State::from_xy(0.0, -1.0, 3.0, 0.0);
        assert!(matches!(orbit_elements(&s, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn kepler_sweep_examples() {
        let v = kepler_sweep_angle(0.5, 1.0).unwrap();
        assert!((v - 3.0 * PI / 4.0).abs() < 1e-15);
        assert!((kepler_sweep_angle(1.0, 1e-9).unwrap() - PI).abs() < 1e-8);
        assert!((kepler_sweep_angle(1e12, 1.0).unwrap() - FRAC_PI_2).abs() < 1e-5);
        assert!(kepler_sweep_angle(0.0, 1.0).is_err());
    }

    #[test]
    fn max_sweep_examples() {
        let c = 1.7;
        assert_eq!(max_sweep_angle(0.9, 0.0, c).unwrap(), kepler_sweep_angle(0.9, c).unwrap());
        let v = max_sweep_angle(0.5, 0.1, 1.2f64.sqrt()).unwrap();
        assert!((v - 1.2f64.sqrt() * 3.0 * PI / 4.0).abs() < 1e-14);
        assert!((v - 2.5810817).abs() < 1e-6);
        let mut last = 0.0;
        for i in 0..50 {
            let beta = 0.02 * i as f64;
            let v = max_sweep_angle(1.0, beta, 1.5).unwrap();
            assert!(v > last);
            last = v;
        }
        assert!(matches!(max_sweep_angle(1.0, 0.5, 1.0), Err(Error::CollisionalOrbit { .. })));
    }

    #[test]
    fn travel_time_basic() {
        let p = params(0.5, 0.1);
        let el = OrbitElements::from_momentum(1.2f64.sqrt(), 0.0, &p).unwrap();
        assert_eq!(travel_time(el.r_min, &el, &p).unwrap(), 0.0);
        let t2 = travel_time(2.0, &el, &p).unwrap();
        let t4 = travel_time(4.0, &el, &p).unwrap();
        assert!(t4 > t2 && t2 > 0.0);
        assert!(travel_time(0.5 * el.r_min, &el, &p).is_err());
    }

    #[test]
    fn travel_time_matches_hyperbolic_anomaly_clock() {
        let p = params(0.7, 0.03);
        let el = OrbitElements::from_momentum(0.9, 0.0, &p).unwrap();
        for nu in [0.1, 0.7, 1.5, 2.0] {
            if nu >= el.asymptote_anomaly() {
                continue;
            }
            let r = el.radius_at_anomaly(nu);
            let a = travel_time(r, &el, &p).unwrap();
            let b = el.time_at_anomaly(nu);
            assert!((a - b).abs() < 1e-9 * b.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn tangency_momentum_cross_check() {
        let p = params(1.0, 0.0);
        let c2 = tangency_momentum(FRAC_PI_2, &p).unwrap();
        assert!((c2 - 4.0).abs() < 1e-15);
        let s = State::from_xy(0.0, -1.0, 2.0, 0.0);
        assert!((energy(&s, &p).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(angular_momentum(&s).powi(2), c2);
        assert!((tangency_momentum(1e-9, &p).unwrap() - 2.0).abs() < 1e-8);
        let pb = params(1.0, 0.25);
        assert!((tangency_momentum(FRAC_PI_2, &pb).unwrap() - c2 - 0.5).abs() < 1e-15);
        assert!(tangency_momentum(0.0, &p).is_err());
        assert!(tangency_momentum(PI, &p).is_err());
    }

    #[test]
    fn momentum_range_examples() {
        assert_eq!(momentum_range_k(&params(0.5, 0.0)), (1.0, 2.0));
        let (lo, hi) = momentum_range_k(&params(1.0, 0.0));
        assert!((lo - 2f64.sqrt()).abs() < 1e-15 && (hi - 6f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn small_argument_sinh() {
        for x in [1e-8f64, 1e-3, 0.05, 0.0999, -0.04] {
            let x2 = x * x;
            let exact = x * x2 / 6.0 * (1.0 + x2 / 20.0 * (1.0 + x2 / 42.0 * (1.0 + x2 / 72.0)));
            assert!((sinh_minus_identity(x) - exact).abs() <= 1e-14 * exact.abs());
        }
        let x = 0.1f64;
        assert!((sinh_minus_identity(x) - (x.sinh() - x)).abs() <= 1e-12 * (x.sinh() - x));
    }
}
