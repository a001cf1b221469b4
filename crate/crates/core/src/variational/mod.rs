//! Fixed-end arcs with prescribed winding number.
//!
//! Paths live in log-polar coordinates `(rho, theta)`, `u = e^rho (cos theta,
//! sin theta)`, on a uniform grid `s_i = i/N`. On segment `i` write
//! `d_i^2 = drho_i^2 + dtheta_i^2`, `R_i^2 = (r_i^2 + r_{i+1}^2)/2` and `p = h - V`
//! with `pbar_i` its segment average. Then
//!
//! ```text
//! K = int |u'|^2       ~ N sum d_i^2 R_i^2
//! P = int (h - V(u))   ~ (1/N) sum pbar_i
//! M = K P / 2
//! L = int |u'| sqrt(h - V(u)) ~ sum d_i R_i sqrt(pbar_i)
//! ```
//!
//! and `L^2 <= 2M` holds exactly for the discrete sums, with equality iff
//! `d_i R_i / sqrt(pbar_i)` is the same on every segment.

mod reparam;
mod solver;

pub use reparam::equal_speed_reparam;
pub use solver::{
    arc_from_elements, discretize_arc, exact_arc, exact_jacobi_length, minimize_arc, ode_residual, polish_arc, solve_arc,
    ArcOptions, MinArc,
};

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Params;
use crate::potential::Vec2;
use crate::winding::segment_angle;

/// A discretized curve from `z0` to `z1` in a fixed winding class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarPath {
    /// Log-radius at each node, `N + 1` entries.
    pub rho: Vec<f64>,
    /// Lifted polar angle at each node.
    pub theta: Vec<f64>,
    pub z0: Vec2,
    pub z1: Vec2,
    pub k: i64,
}

/// Lifted-angle change a curve from `z0` to `z1` needs for winding number `k`.
pub fn target_angle(z0: &Vec2, z1: &Vec2, k: i64) -> Result<f64> {
    Ok(TAU * k as f64 - segment_angle(z1, z0)?)
}

impl PolarPath {
    /// Build a path from node coordinates, checking the endpoint and winding
    /// constraints.
    pub fn new(z0: Vec2, z1: Vec2, k: i64, rho: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        if rho.len() != theta.len() || rho.len() < 2 {
            return Err(Error::domain("a path needs matching rho/theta arrays of length >= 2"));
        }
        if rho.iter().chain(theta.iter()).any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite path node"));
        }
        let path = PolarPath { rho, theta, z0, z1, k };
        let (a, b) = (path.point(0), path.point(path.n()));
        let scale = z0.norm().max(z1.norm());
        if (a - z0).norm() > 1e-12 * scale || (b - z1).norm() > 1e-12 * scale {
            return Err(Error::domain("path endpoints do not match z0, z1"));
        }
        let want = target_angle(&z0, &z1, k)?;
        let have = path.theta[path.n()] - path.theta[0];
        if (want - have).abs() > 1e-12 * want.abs().max(1.0) {
            return Err(Error::domain(format!(
                "lifted angle change {have} differs from the target {want}"
            )));
        }
        Ok(path)
    }

    /// Logarithmic spiral from `z0` to `z1` with winding `k`: `rho` and `theta`
    /// both linear in `s`.
    pub fn spiral(z0: Vec2, z1: Vec2, k: i64, n: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::domain("a path needs at least one segment"));
        }
        let (rho0, rho1) = (z0.norm().ln(), z1.norm().ln());
        let theta0 = z0.y.atan2(z0.x);
        let dtheta = target_angle(&z0, &z1, k)?;
        let nf = n as f64;
        let rho = (0..=n).map(|i| rho0 + (rho1 - rho0) * i as f64 / nf).collect();
        let mut theta: Vec<f64> = (0..=n).map(|i| theta0 + dtheta * i as f64 / nf).collect();
        theta[n] = theta0 + dtheta;
        Ok(PolarPath { rho, theta, z0, z1, k })
    }

    /// Number of segments.
    pub fn n(&self) -> usize {
        self.rho.len() - 1
    }

    pub fn nodes(&self) -> Vec<(f64, f64)> {
        self.rho.iter().copied().zip(self.theta.iter().copied()).collect()
    }

    pub fn point(&self, i: usize) -> Vec2 {
        let r = self.rho[i].exp();
        let (s, c) = self.theta[i].sin_cos();
        Vec2::new(r * c, r * s)
    }

    pub fn points(&self) -> Vec<Vec2> {
        (0..=self.n()).map(|i| self.point(i)).collect()
    }

    pub fn min_radius(&self) -> f64 {
        self.rho.iter().copied().fold(f64::INFINITY, f64::min).exp()
    }

    /// Number of free coordinates (interior rho and theta).
    pub fn dof(&self) -> usize {
        2 * (self.n() - 1)
    }

    /// Interior coordinates packed as `[rho_1, theta_1, rho_2, ...]`.
    pub fn free(&self) -> Vec<f64> {
        (1..self.n()).flat_map(|j| [self.rho[j], self.theta[j]]).collect()
    }

    pub fn with_free(&self, x: &[f64]) -> PolarPath {
        let mut out = self.clone();
        for j in 1..self.n() {
            out.rho[j] = x[2 * (j - 1)];
            out.theta[j] = x[2 * (j - 1) + 1];
        }
        out
    }
}

/// `h - V` as a function of the log-radius.
pub(crate) fn kinetic(rho: f64, p: &Params) -> f64 {
    let u = (-rho).exp();
    p.h + u + p.beta * u * u
}

pub(crate) fn kinetic_d1(rho: f64, p: &Params) -> f64 {
    let u = (-rho).exp();
    -u - 2.0 * p.beta * u * u
}

pub(crate) fn kinetic_d2(rho: f64, p: &Params) -> f64 {
    let u = (-rho).exp();
    u + 4.0 * p.beta * u * u
}

/// The three discrete integrals of a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Functionals {
    /// `int |u'|^2`.
    pub kinetic: f64,
    /// `int (h - V)`.
    pub potential: f64,
    pub jacobi: f64,
}

impl Functionals {
    pub fn maupertuis(&self) -> f64 {
        0.5 * self.kinetic * self.potential
    }

    /// Frequency of the time rescaling `z(t) = u(omega t)`.
    pub fn omega(&self) -> f64 {
        (self.potential / self.kinetic).sqrt()
    }
}

pub fn functionals(path: &PolarPath, p: &Params) -> Functionals {
    let n = path.n();
    let nf = n as f64;
    let pk: Vec<f64> = path.rho.iter().map(|&r| kinetic(r, p)).collect();
    let e2: Vec<f64> = path.rho.iter().map(|&r| (2.0 * r).exp()).collect();
    let (mut k, mut pot, mut l) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let dr = path.rho[i + 1] - path.rho[i];
        let dt = path.theta[i + 1] - path.theta[i];
        let d2 = dr * dr + dt * dt;
        let r2 = 0.5 * (e2[i] + e2[i + 1]);
        let pbar = 0.5 * (pk[i] + pk[i + 1]);
        k += d2 * r2;
        pot += pbar;
        l += (d2 * r2 * pbar).sqrt();
    }
    Functionals { kinetic: k * nf, potential: pot / nf, jacobi: l }
}

/// Discrete Maupertuis functional `M = (1/2) int |u'|^2 int (h - V)`.
pub fn maupertuis(path: &PolarPath, p: &Params) -> f64 {
    functionals(path, p).maupertuis()
}

/// Discrete Jacobi length `int |u'| sqrt(h - V)`.
pub fn jacobi_length(path: &PolarPath, p: &Params) -> f64 {
    functionals(path, p).jacobi
}

/// Gradients of the kinetic and potential integrals with respect to the free
/// coordinates, in the layout of [`PolarPath::free`].
pub(crate) fn kp_gradients(path: &PolarPath, p: &Params) -> (Vec<f64>, Vec<f64>) {
    let n = path.n();
    let nf = n as f64;
    let mut gk = vec![0.0; path.dof()];
    let mut gp = vec![0.0; path.dof()];
    let e2: Vec<f64> = path.rho.iter().map(|&r| (2.0 * r).exp()).collect();
    let add = |g: &mut Vec<f64>, node: usize, comp: usize, v: f64| {
        if node >= 1 && node < n {
            g[2 * (node - 1) + comp] += v;
        }
    };
    for i in 0..n {
        let dr = path.rho[i + 1] - path.rho[i];
        let dt = path.theta[i + 1] - path.theta[i];
        let d2 = dr * dr + dt * dt;
        let r2 = 0.5 * (e2[i] + e2[i + 1]);
        add(&mut gk, i, 0, nf * (-2.0 * dr * r2 + d2 * e2[i]));
        add(&mut gk, i + 1, 0, nf * (2.0 * dr * r2 + d2 * e2[i + 1]));
        add(&mut gk, i, 1, nf * (-2.0 * dt * r2));
        add(&mut gk, i + 1, 1, nf * (2.0 * dt * r2));
    }
    for j in 1..n {
        gp[2 * (j - 1)] = kinetic_d1(path.rho[j], p) / nf;
    }
    (gk, gp)
}

/// Gradient of the discrete Maupertuis functional over the free coordinates.
pub fn maupertuis_gradient(path: &PolarPath, p: &Params) -> Vec<f64> {
    let f = functionals(path, p);
    let (gk, gp) = kp_gradients(path, p);
    gk.iter()
        .zip(&gp)
        .map(|(a, b)| 0.5 * (a * f.potential + f.kinetic * b))
        .collect()
}

/// Gradient of the discrete Jacobi length over the free coordinates.
pub fn jacobi_gradient(path: &PolarPath, p: &Params) -> Vec<f64> {
    let n = path.n();
    let mut g = vec![0.0; path.dof()];
    let e2: Vec<f64> = path.rho.iter().map(|&r| (2.0 * r).exp()).collect();
    let pk: Vec<f64> = path.rho.iter().map(|&r| kinetic(r, p)).collect();
    let dpk: Vec<f64> = path.rho.iter().map(|&r| kinetic_d1(r, p)).collect();
    let mut add = |node: usize, comp: usize, v: f64| {
        if node >= 1 && node < n {
            g[2 * (node - 1) + comp] += v;
        }
    };
    for i in 0..n {
        let dr = path.rho[i + 1] - path.rho[i];
        let dt = path.theta[i + 1] - path.theta[i];
        let d = (dr * dr + dt * dt).sqrt();
        let rr = (0.5 * (e2[i] + e2[i + 1])).sqrt();
        let pbar = 0.5 * (pk[i] + pk[i + 1]);
        let sp = pbar.sqrt();
        if d > 0.0 {
            add(i, 0, -dr / d * rr * sp);
            add(i + 1, 0, dr / d * rr * sp);
            add(i, 1, -dt / d * rr * sp);
            add(i + 1, 1, dt / d * rr * sp);
        }
        for j in [i, i + 1] {
            let d_rr = e2[j] / (2.0 * rr);
            let d_sp = 0.25 * dpk[j] / sp;
            add(j, 0, d * (d_rr * sp + rr * d_sp));
        }
    }
    g
}

/// Lower bound on the distance to the centre of any curve with Jacobi length
/// `jacobi_len` that starts on the wall.
pub fn pericentre_lower_bound(jacobi_len: f64, p: &Params) -> Result<f64> {
    if !(p.beta > 0.0) {
        return Err(Error::domain("the pericentre bound needs beta > 0"));
    }
    Ok(p.l * (-jacobi_len / p.beta.sqrt()).exp())
}
