//! The fixed-end arc solver.
//!
//! 1. Candidate conics through both endpoints with the required lifted angle
//!    change: seeds from a scan over the reduced momentum and from the
//!    pericentre of a discrete Jacobi geodesic, each refined by a
//!    two-variable Newton iteration. The wall-free candidate with winding `k`
//!    and least Jacobi length is kept.
//! 2. That conic sampled as a path, equal-speed reparametrization onto the
//!    uniform `s`-grid, Newton descent on the discrete Maupertuis functional
//!    over all interior nodes, and a final equal-speed reparametrization.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::reparam::reparam_to;
use super::{
    functionals, jacobi_gradient, kinetic_d2, kp_gradients, target_angle, Functionals,
    PolarPath,
};
use crate::elements::{orbit_elements, OrbitElements};
use crate::error::{Diagnostics, Error, Result};
use crate::params::Params;
use crate::potential::{grad_potential, speed_at, State, Vec2};
use crate::roots::illinois;
use crate::propagator::{on_wall, propagate_to_wall_sampled, BallisticArc, DEFAULT_SAMPLES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcOptions {
    /// Segments of the returned path.
    pub nodes: usize,
    /// Segments of the angle grid used for the geodesic stage.
    pub geodesic_nodes: usize,
    /// Stop when the gradient of the discrete functional has this sup-norm.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Run the descent on the discrete Maupertuis functional. Without it the
    /// returned path is the reparametrized geodesic.
    pub m_stage: bool,
    /// Samples along the returned ballistic arc.
    pub samples: usize,
}

impl Default for ArcOptions {
    fn default() -> Self {
        ArcOptions {
            nodes: 1024,
            geodesic_nodes: 2048,
            grad_tol: 1e-9,
            max_iter: 10_000,
            m_stage: true,
            samples: DEFAULT_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinArc {
    pub path: PolarPath,
    pub m_value: f64,
    pub l_value: f64,
    pub omega: f64,
    /// The time-parametrized trajectory.
    pub solution: BallisticArc,
    /// Newton iterations spent on the discrete Maupertuis functional.
    pub iterations: usize,
}

impl MinArc {
    /// Jacobi length of the exact trajectory.
    pub fn exact_jacobi_length(&self) -> f64 {
        exact_jacobi_length(&self.solution)
    }
}

/// `int |z'| sqrt(h - V) dt = sqrt 2 int (h - V) dt` along a conic arc, in
/// closed form: `sqrt 2 (h T + sqrt(a) dH + beta dnu / C')`.
pub fn exact_jacobi_length(arc: &BallisticArc) -> f64 {
    let el = &arc.elements;
    let a = 0.5 / el.h;
    let dh = el.hyperbolic_anomaly(arc.nu_end) - el.hyperbolic_anomaly(arc.nu_start);
    let dnu = arc.nu_end - arc.nu_start;
    std::f64::consts::SQRT_2 * (el.h * arc.flight_time + a.sqrt() * dh + el.beta * dnu / el.c_prime)
}

fn check_endpoints(z0: &Vec2, z1: &Vec2, k: i64, p: &Params) -> Result<()> {
    p.validate()?;
    if k == 0 {
        return Err(Error::domain("winding number 0 is excluded"));
    }
    if !on_wall(z0, p) || !on_wall(z1, p) {
        return Err(Error::domain("arc endpoints must lie on the wall"));
    }
    Ok(())
}

fn optimizer_error(stage: &str, iterations: usize, gradient_norm: f64, value: f64, msg: &str) -> Error {
    Error::Optimizer(Diagnostics {
        stage: stage.into(),
        iterations,
        gradient_norm,
        value,
        message: msg.into(),
    })
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Solve a symmetric tridiagonal system in place; `None` if a pivot is not
/// positive.
fn thomas(diag: &[f64], off: &[f64], rhs: &mut [f64]) -> Option<()> {
    let n = diag.len();
    let mut piv = vec![0.0; n];
    piv[0] = diag[0];
    if !(piv[0] > 0.0) {
        return None;
    }
    for i in 1..n {
        let l = off[i - 1] / piv[i - 1];
        piv[i] = diag[i] - l * off[i - 1];
        if !(piv[i] > 0.0) {
            return None;
        }
        rhs[i] -= l * rhs[i - 1];
    }
    rhs[n - 1] /= piv[n - 1];
    for i in (0..n - 1).rev() {
        rhs[i] = (rhs[i] - off[i] * rhs[i + 1]) / piv[i];
    }
    Some(())
}

/// Discrete geodesic on the uniform angle grid.
fn geodesic(z0: Vec2, z1: Vec2, k: i64, p: &Params, n: usize) -> Result<PolarPath> {
    let mut path = PolarPath::spiral(z0, z1, k, n)?;
    let m = n - 1;
    let rho_grad = |path: &PolarPath| -> Vec<f64> {
        jacobi_gradient(path, p).iter().step_by(2).copied().collect()
    };
    let value = |path: &PolarPath| functionals(path, p).jacobi;
    let mut f = value(&path);
    let mut g = rho_grad(&path);
    let mut mu = 0.0;
    for iter in 0..200 {
        let gn = sup(&g);
        if gn <= 1e-13 * f.max(1.0) {
            return Ok(path);
        }
        // tridiagonal Hessian from three coloured gradient differences
        let eps = 1e-6;
        let mut diag = vec![0.0; m];
        let mut off = vec![0.0; m.saturating_sub(1)];
        for colour in 0..3 {
            let mut plus = path.clone();
            let mut minus = path.clone();
            for j in (colour..m).step_by(3) {
                plus.rho[j + 1] += eps;
                minus.rho[j + 1] -= eps;
            }
            let (gp, gm) = (rho_grad(&plus), rho_grad(&minus));
            for j in (colour..m).step_by(3) {
                diag[j] = (gp[j] - gm[j]) / (2.0 * eps);
                if j + 1 < m {
                    off[j] += 0.5 * (gp[j + 1] - gm[j + 1]) / (2.0 * eps);
                }
                if j >= 1 {
                    off[j - 1] += 0.5 * (gp[j - 1] - gm[j - 1]) / (2.0 * eps);
                }
            }
        }
        let scale = diag.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-300);
        let mut accepted = false;
        for _ in 0..40 {
            let shifted: Vec<f64> = diag.iter().map(|d| d + mu * scale).collect();
            let mut step: Vec<f64> = g.iter().map(|x| -x).collect();
            if thomas(&shifted, &off, &mut step).is_none() {
                mu = (mu * 10.0).max(1e-10);
                continue;
            }
            let slope: f64 = step.iter().zip(&g).map(|(a, b)| a * b).sum();
            let mut alpha = 1.0;
            for _ in 0..40 {
                let mut trial = path.clone();
                for j in 0..m {
                    trial.rho[j + 1] += alpha * step[j];
                }
                let ft = value(&trial);
                if ft <= f + 1e-4 * alpha * slope {
                    path = trial;
                    accepted = ft < f || alpha == 1.0;
                    f = ft;
                    break;
                }
                alpha *= 0.5;
            }
            if accepted {
                mu *= 0.1;
                if mu < 1e-12 {
                    mu = 0.0;
                }
                break;
            }
            mu = (mu * 10.0).max(1e-10);
        }
        if !accepted {
            // no further decrease is possible at this precision
            if gn <= 1e-8 * f.max(1.0) {
                return Ok(path);
            }
            return Err(optimizer_error("geodesic", iter, gn, f, "line search failed"));
        }
        g = rho_grad(&path);
    }
    let gn = sup(&g);
    if gn <= 1e-8 * f.max(1.0) {
        Ok(path)
    } else {
        Err(optimizer_error("geodesic", 200, gn, f, "iteration limit"))
    }
}

/// `ln r` on the conic with reduced momentum `cp` at anomaly `nu`, and its
/// partial derivatives in `cp` and `nu`.
fn log_radius(cp: f64, nu: f64, h: f64) -> (f64, f64, f64) {
    let e = (1.0 + 2.0 * h * cp * cp).sqrt();
    let q = 1.0 + e * nu.cos();
    let de = 2.0 * h * cp / e;
    (
        2.0 * cp.ln() - q.ln(),
        2.0 / cp - de * nu.cos() / q,
        e * nu.sin() / q,
    )
}

/// Build the wall-to-wall arc of the conic with reduced momentum `cp` that
/// starts at `z0` with anomaly `nu0` and turns by `dtheta`.
pub fn arc_from_elements(
    z0: Vec2,
    dtheta: f64,
    cp: f64,
    nu0: f64,
    p: &Params,
    samples: usize,
) -> Result<BallisticArc> {
    let dir = dtheta.signum();
    let c = dir * (cp * cp + 2.0 * p.beta).sqrt();
    let mut el = OrbitElements::from_momentum(c, 0.0, p)?;
    let theta0 = z0.y.atan2(z0.x);
    el.theta_peri = theta0 - dir * nu0 / el.gamma;
    let mut s = el.state_at_anomaly(nu0);
    s.pos = z0;
    // re-project the speed onto the energy shell at the exact start point
    let v = speed_at(&z0, p)?;
    s.vel *= v / s.vel.norm();
    if s.vel.y < 0.0 {
        return Err(Error::domain("conic leaves the start point into the wall"));
    }
    propagate_to_wall_sampled(&s, p, samples)
}

/// Newton iteration for the conic through `z0` and `z1` whose lifted angle
/// changes by `dtheta`, from a seed `(C', nu0)`.
fn polish_conic(z0: &Vec2, z1: &Vec2, dtheta: f64, seed: (f64, f64), p: &Params) -> Result<(f64, f64)> {
    let (ln_r0, ln_r1) = (z0.norm().ln(), z1.norm().ln());
    let turn = dtheta.abs();
    let residual = |cp: f64, nu0: f64| -> Option<(Vector2<f64>, Matrix2<f64>)> {
        let big = (cp * cp + 2.0 * p.beta).sqrt();
        let gamma = cp / big;
        let dgamma = 2.0 * p.beta / big.powi(3);
        let nu1 = nu0 + gamma * turn;
        let e = (1.0 + 2.0 * p.h * cp * cp).sqrt();
        let limit = std::f64::consts::FRAC_PI_2 + (1.0 / e).asin();
        if !(cp > 0.0) || nu0.abs() >= limit || nu1.abs() >= limit {
            return None;
        }
        let (f0, a0, b0) = log_radius(cp, nu0, p.h);
        let (f1, a1, b1) = log_radius(cp, nu1, p.h);
        Some((
            Vector2::new(f0 - ln_r0, f1 - ln_r1),
            Matrix2::new(a0, b0, a1 + b1 * turn * dgamma, b1),
        ))
    };
    let (mut cp, mut nu0) = seed;
    let Some((mut f, mut jac)) = residual(cp, nu0) else {
        return Err(optimizer_error("polish", 0, f64::NAN, cp, "seed outside the conic"));
    };
    for iter in 0..100 {
        if f.amax() <= 1e-15 {
            return Ok((cp, nu0));
        }
        let Some(step) = jac.lu().solve(&(-f)) else {
            return Err(optimizer_error("polish", iter, f.amax(), cp, "singular Jacobian"));
        };
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let (c2, n2) = (cp + alpha * step[0], nu0 + alpha * step[1]);
            if let Some((f2, j2)) = residual(c2, n2) {
                if f2.norm() < f.norm() {
                    cp = c2;
                    nu0 = n2;
                    f = f2;
                    jac = j2;
                    moved = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !moved {
            if f.amax() <= 1e-12 {
                return Ok((cp, nu0));
            }
            return Err(optimizer_error("polish", iter, f.amax(), cp, "no decrease of the residual"));
        }
    }
    if f.amax() <= 1e-12 {
        Ok((cp, nu0))
    } else {
        Err(optimizer_error("polish", 100, f.amax(), cp, "iteration limit"))
    }
}

fn polish_from(z0: Vec2, z1: Vec2, k: i64, seed: (f64, f64), p: &Params, samples: usize) -> Result<BallisticArc> {
    let dtheta = target_angle(&z0, &z1, k)?;
    let (cp, nu0) = polish_conic(&z0, &z1, dtheta, seed, p)?;
    let mut arc = arc_from_elements(z0, dtheta, cp, nu0, p, samples)?;
    let miss = (arc.end.pos - z1).norm();
    if miss > 1e-8 * p.l.max(z1.norm()) || arc.winding != k {
        return Err(optimizer_error(
            "polish",
            0,
            miss,
            arc.winding as f64,
            "conic through the endpoints meets the wall in between",
        ));
    }
    // the conic passes through z1; the small miss is the re-propagation
    // from z0, which close passes amplify
    arc.end.pos = z1;
    if let Some(last) = arc.samples.last_mut() {
        last.pos = z1;
    }
    Ok(arc)
}

/// Refine a seed state at `z0` into the exact ballistic arc from `z0` to `z1`
/// with winding `k`.
pub fn polish_arc(z0: Vec2, z1: Vec2, k: i64, seed: &State, p: &Params, samples: usize) -> Result<BallisticArc> {
    check_endpoints(&z0, &z1, k, p)?;
    let el = orbit_elements(seed, p)?;
    polish_from(z0, z1, k, (el.c_prime, el.anomaly_of(seed)), p, samples)
}

/// Seed `(C', nu0)` from the innermost node of a geodesic: at the pericentre
/// `C'^2 = 2 h r^2 + 2 r`, and the anomaly grows by `gamma` per radian.
fn pericentre_seed(geo: &PolarPath, p: &Params) -> Option<(f64, f64)> {
    let n = geo.n();
    let i = (0..=n).min_by(|&a, &b| geo.rho[a].total_cmp(&geo.rho[b]))?;
    if i == 0 || i == n {
        return None;
    }
    // parabola through the three innermost nodes
    let (a, b, c) = (geo.rho[i - 1], geo.rho[i], geo.rho[i + 1]);
    let curv = a - 2.0 * b + c;
    let (shift, rho_min) = if curv > 0.0 {
        let s = 0.5 * (a - c) / curv;
        (s, b - 0.125 * (c - a).powi(2) / curv)
    } else {
        (0.0, b)
    };
    let dt = geo.theta[i + 1] - geo.theta[i];
    let theta_min = geo.theta[i] + shift * dt;
    let r = rho_min.exp();
    let cp = (2.0 * p.h * r * r + 2.0 * r).sqrt();
    let gamma = cp / (cp * cp + 2.0 * p.beta).sqrt();
    Some((cp, -gamma * (theta_min - geo.theta[0]).abs()))
}

/// Seeds `(C', nu0)` of every conic through `z0` and `z1` turning by `dtheta`
/// inside its asymptotes. For fixed `C'` the start radius fixes `nu0` up to
/// sign, and the inverse end radius is scanned on a log grid in `C'`.
fn scan_seeds(z0: &Vec2, z1: &Vec2, dtheta: f64, p: &Params) -> Vec<(f64, f64)> {
    let (r0, r1) = (z0.norm(), z1.norm());
    let turn = dtheta.abs();
    let eval = |cp: f64, branch: f64| -> Option<(f64, f64)> {
        let e = (1.0 + 2.0 * p.h * cp * cp).sqrt();
        let c = (cp * cp / r0 - 1.0) / e;
        if !(-1.0..=1.0).contains(&c) {
            return None;
        }
        let nu0 = branch * c.acos();
        let gamma = cp / (cp * cp + 2.0 * p.beta).sqrt();
        let nu1 = nu0 + gamma * turn;
        let limit = std::f64::consts::FRAC_PI_2 + (1.0 / e).asin();
        if nu1 >= limit {
            // continuous extension past the asymptote, where u = 0
            return Some((nu0, -1.0 / r1 - (nu1 - limit)));
        }
        Some((nu0, (1.0 + e * nu1.cos()) / (cp * cp) - 1.0 / r1))
    };
    // largest C' reaching r0: C'^2 / r0 - 1 = e
    let mut hi = 1.0;
    while eval(hi, 1.0).is_some() {
        hi *= 2.0;
    }
    let mut lo = hi * 0.5;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if eval(mid, 1.0).is_some() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let cp_max = lo;
    let cp_min = 1e-6 * cp_max;
    let n = 4000;
    let grid: Vec<f64> = (0..=n)
        .map(|i| cp_min * (cp_max / cp_min).powf(i as f64 / n as f64))
        .collect();
    let mut seeds = Vec::new();
    for branch in [-1.0, 1.0] {
        let g = |cp: f64| eval(cp, branch).map_or(f64::NAN, |(_, v)| v);
        for w in grid.windows(2) {
            let (ga, gb) = (g(w[0]), g(w[1]));
            if ga.is_finite() && gb.is_finite() && (ga > 0.0) != (gb > 0.0) {
                let cp = illinois(g, w[0], w[1], 200);
                if let Some((nu0, _)) = eval(cp, branch) {
                    seeds.push((cp, nu0));
                }
            }
        }
    }
    seeds
}

fn best_arc(z0: Vec2, z1: Vec2, k: i64, p: &Params, seeds: Vec<(f64, f64)>, samples: usize) -> Result<BallisticArc> {
    let mut best: Option<(f64, BallisticArc)> = None;
    let mut last_err = None;
    for seed in seeds {
        match polish_from(z0, z1, k, seed, p, samples) {
            Ok(arc) => {
                let len = exact_jacobi_length(&arc);
                if best.as_ref().is_none_or(|(b, _)| len < *b - 1e-12 * len) {
                    best = Some((len, arc));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some((_, arc)) => Ok(arc),
        None => Err(last_err.unwrap_or_else(|| {
            optimizer_error("polish", 0, f64::NAN, f64::NAN, "no conic joins the endpoints")
        })),
    }
}

/// The wall-free trajectory from `z0` to `z1` with winding `k` and least
/// Jacobi length, from a scan over the reduced momentum only.
pub fn exact_arc(z0: Vec2, z1: Vec2, k: i64, p: &Params, samples: usize) -> Result<BallisticArc> {
    check_endpoints(&z0, &z1, k, p)?;
    let dtheta = target_angle(&z0, &z1, k)?;
    best_arc(z0, z1, k, p, scan_seeds(&z0, &z1, dtheta, p), samples)
}

/// As [`exact_arc`], with the pericentre of a discrete geodesic as an
/// extra candidate seed.
pub fn solve_arc(z0: Vec2, z1: Vec2, k: i64, p: &Params, opts: &ArcOptions) -> Result<BallisticArc> {
    check_endpoints(&z0, &z1, k, p)?;
    if opts.geodesic_nodes < 3 {
        return Err(Error::domain("geodesic grid needs at least 3 segments"));
    }
    let dtheta = target_angle(&z0, &z1, k)?;
    let geo = geodesic(z0, z1, k, p, opts.geodesic_nodes).ok();
    let mut seeds: Vec<(f64, f64)> = geo.as_ref().and_then(|g| pericentre_seed(g, p)).into_iter().collect();
    seeds.extend(scan_seeds(&z0, &z1, dtheta, p));
    best_arc(z0, z1, k, p, seeds, opts.samples)
}

/// The arc as a path, sampled uniformly in the anomaly.
fn conic_path(arc: &BallisticArc, z0: Vec2, z1: Vec2, k: i64, n: usize) -> Result<PolarPath> {
    let el = &arc.elements;
    let theta0 = z0.y.atan2(z0.x);
    let mut rho = Vec::with_capacity(n + 1);
    let mut theta = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let nu = arc.nu_start + (arc.nu_end - arc.nu_start) * i as f64 / n as f64;
        rho.push(el.radius_at_anomaly(nu).ln());
        theta.push(theta0 + el.direction * (nu - arc.nu_start) / el.gamma);
    }
    rho[0] = z0.norm().ln();
    rho[n] = z1.norm().ln();
    theta[n] = theta0 + target_angle(&z0, &z1, k)?;
    PolarPath::new(z0, z1, k, rho, theta)
}

/// Block-tridiagonal symmetric matrix with 2x2 blocks.
struct BlockTri {
    diag: Vec<Matrix2<f64>>,
    /// `upper[q]` couples block `q` (rows) to block `q + 1` (columns).
    upper: Vec<Matrix2<f64>>,
}

impl BlockTri {
    /// Solve for several right-hand sides; `None` unless the matrix is
    /// positive definite.
    fn solve(&self, rhs: &mut [Vec<Vector2<f64>>]) -> Option<()> {
        let n = self.diag.len();
        let mut piv_inv = Vec::with_capacity(n);
        let mut d = self.diag[0];
        for q in 0..n {
            if q > 0 {
                let l = self.upper[q - 1].transpose() * piv_inv[q - 1];
                d = self.diag[q] - l * self.upper[q - 1];
                for r in rhs.iter_mut() {
                    let prev = r[q - 1];
                    r[q] -= l * prev;
                }
            }
            if !(d[(0, 0)] > 0.0 && d.determinant() > 0.0) {
                return None;
            }
            piv_inv.push(d.try_inverse()?);
        }
        for r in rhs.iter_mut() {
            r[n - 1] = piv_inv[n - 1] * r[n - 1];
            for q in (0..n - 1).rev() {
                let next = r[q + 1];
                r[q] = piv_inv[q] * (r[q] - self.upper[q] * next);
            }
        }
        Some(())
    }
}

fn pack(v: &[f64]) -> Vec<Vector2<f64>> {
    v.chunks(2).map(|c| Vector2::new(c[0], c[1])).collect()
}

fn unpack(v: &[Vector2<f64>]) -> Vec<f64> {
    v.iter().flat_map(|c| [c[0], c[1]]).collect()
}

fn dot(a: &[Vector2<f64>], b: &[Vector2<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

/// Newton step for the discrete Maupertuis functional: the Hessian is
/// `(P H_K + K H_P)/2 + (gK gP^T + gP gK^T)/2`, block tridiagonal plus rank
/// two, solved with the Woodbury identity.
fn m_newton_step(path: &PolarPath, p: &Params, f: &Functionals, g: &[f64], shift: f64) -> Option<Vec<f64>> {
    let n = path.n();
    let nf = n as f64;
    let m = n - 1;
    let (gk, gp) = kp_gradients(path, p);
    let mut hk_diag = vec![Matrix2::zeros(); m];
    let mut hk_up = vec![Matrix2::zeros(); m.saturating_sub(1)];
    let e2: Vec<f64> = path.rho.iter().map(|&r| (2.0 * r).exp()).collect();
    for i in 0..n {
        let dr = path.rho[i + 1] - path.rho[i];
        let dt = path.theta[i + 1] - path.theta[i];
        let a = dr * dr + dt * dt;
        let b = 0.5 * (e2[i] + e2[i + 1]);
        let ga = [-2.0 * dr, -2.0 * dt, 2.0 * dr, 2.0 * dt];
        let gb = [e2[i], 0.0, e2[i + 1], 0.0];
        let mut h = [[0.0; 4]; 4];
        for r in 0..4 {
            for c in 0..4 {
                let haa = if r % 2 == c % 2 { if r == c { 2.0 } else { -2.0 } } else { 0.0 };
                let hbb = if r == c && r % 2 == 0 { 2.0 * gb[r] } else { 0.0 };
                h[r][c] = nf * (b * haa + ga[r] * gb[c] + gb[r] * ga[c] + a * hbb);
            }
        }
        let block = |r0: usize, c0: usize| {
            Matrix2::new(h[r0][c0], h[r0][c0 + 1], h[r0 + 1][c0], h[r0 + 1][c0 + 1])
        };
        if i >= 1 {
            hk_diag[i - 1] += block(0, 0);
        }
        if i + 1 < n {
            hk_diag[i] += block(2, 2);
        }
        if i >= 1 && i + 1 < n {
            hk_up[i - 1] += block(0, 2);
        }
    }
    let mut tri = BlockTri {
        diag: hk_diag.iter().map(|d| d * (0.5 * f.potential)).collect(),
        upper: hk_up.iter().map(|u| u * (0.5 * f.potential)).collect(),
    };
    let mut scale = 0.0f64;
    for (q, d) in tri.diag.iter_mut().enumerate() {
        d[(0, 0)] += 0.5 * f.kinetic * kinetic_d2(path.rho[q + 1], p) / nf;
        scale = scale.max(d[(0, 0)].abs()).max(d[(1, 1)].abs());
    }
    for d in tri.diag.iter_mut() {
        *d += Matrix2::identity() * (shift * scale);
    }
    let (u, v) = (pack(&gk), pack(&gp));
    let mut rhs = vec![pack(&g.iter().map(|x| -x).collect::<Vec<_>>()), u.clone(), v.clone()];
    tri.solve(&mut rhs)?;
    let (y, bu, bv) = (&rhs[0], &rhs[1], &rhs[2]);
    // (B + U C U^T)^{-1} = B^{-1} - B^{-1} U (C^{-1} + U^T B^{-1} U)^{-1} U^T B^{-1},
    // U = [gK gP], C = [[0, 1/2], [1/2, 0]]
    let s = Matrix2::new(dot(&u, bu), 2.0 + dot(&u, bv), 2.0 + dot(&v, bu), dot(&v, bv));
    let w = s.try_inverse()? * Vector2::new(dot(&u, y), dot(&v, y));
    let x: Vec<Vector2<f64>> = (0..m).map(|q| y[q] - bu[q] * w[0] - bv[q] * w[1]).collect();
    Some(unpack(&x))
}

/// Newton descent with backtracking on the discrete Maupertuis functional.
const STALL_STEPS: usize = 20;
/// Gradient accepted once Newton steps no longer reduce it.
const FLOOR_TOL: f64 = 1e-6;

fn m_stage(mut path: PolarPath, p: &Params, opts: &ArcOptions) -> Result<(PolarPath, usize)> {
    let mut f = functionals(&path, p);
    let mut g = super::maupertuis_gradient(&path, p);
    let mut shift = 0.0;
    let (mut best, mut stalled) = (f64::INFINITY, 0);
    for iter in 0..opts.max_iter {
        let gn = sup(&g);
        if gn <= opts.grad_tol {
            return Ok((path, iter));
        }
        // far from the origin a node ulp moves the gradient by ~1e-10
        if gn < 0.99 * best {
            best = gn;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= STALL_STEPS && gn <= FLOOR_TOL {
                return Ok((path, iter));
            }
        }
        let m0 = f.maupertuis();
        let mut accepted = false;
        for _ in 0..30 {
            let Some(step) = m_newton_step(&path, p, &f, &g, shift) else {
                shift = (shift * 10.0).max(1e-12);
                continue;
            };
            let slope: f64 = step.iter().zip(&g).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                shift = (shift * 10.0).max(1e-12);
                continue;
            }
            let x = path.free();
            let mut alpha = 1.0;
            for _ in 0..40 {
                let xt: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + alpha * b).collect();
                let trial = path.with_free(&xt);
                let ft = functionals(&trial, p);
                let mt = ft.maupertuis();
                let sufficient = mt <= m0 + 1e-4 * alpha * slope;
                // at round-off level accept steps that shrink the gradient
                let flat = (mt - m0).abs() <= 1e-13 * m0;
                if sufficient || flat {
                    let gt = super::maupertuis_gradient(&trial, p);
                    if sufficient || sup(&gt) < gn {
                        path = trial;
                        f = ft;
                        g = gt;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if accepted {
                shift *= 0.1;
                if shift < 1e-14 {
                    shift = 0.0;
                }
                break;
            }
            shift = (shift * 10.0).max(1e-12);
        }
        if !accepted {
            return Err(optimizer_error("maupertuis", iter, gn, m0, "no descent step found"));
        }
    }
    let gn = sup(&g);
    if gn <= opts.grad_tol {
        Ok((path, opts.max_iter))
    } else {
        Err(optimizer_error("maupertuis", opts.max_iter, gn, f.maupertuis(), "iteration limit"))
    }
}

/// Local minimizer of the discrete Maupertuis functional among paths from `z0`
/// to `z1` with winding `k`, and the trajectory it reparametrizes to.
pub fn minimize_arc(z0: Vec2, z1: Vec2, k: i64, p: &Params, opts: &ArcOptions) -> Result<MinArc> {
    if opts.nodes < 2 {
        return Err(Error::domain("the path needs at least 2 segments"));
    }
    let solution = solve_arc(z0, z1, k, p, opts)?;
    discretize(solution, z0, z1, k, p, opts)
}

/// Discrete minimizer seeded from an exact arc.
pub fn discretize_arc(solution: BallisticArc, p: &Params, opts: &ArcOptions) -> Result<MinArc> {
    if opts.nodes < 2 {
        return Err(Error::domain("the path needs at least 2 segments"));
    }
    let (z0, z1, k) = (solution.start.pos, solution.end.pos, solution.winding);
    discretize(solution, z0, z1, k, p, opts)
}

fn discretize(solution: BallisticArc, z0: Vec2, z1: Vec2, k: i64, p: &Params, opts: &ArcOptions) -> Result<MinArc> {
    let seed = conic_path(&solution, z0, z1, k, opts.geodesic_nodes.max(opts.nodes))?;
    let mut path = reparam_to(&seed, p, opts.nodes)?;
    let mut iterations = 0;
    if opts.m_stage {
        let (descended, it) = m_stage(path, p, opts)?;
        path = reparam_to(&descended, p, opts.nodes)?;

        iterations = it;
    }
    let f = functionals(&path, p);
    Ok(MinArc {
        path,
        m_value: f.maupertuis(),
        l_value: f.jacobi,
        omega: f.omega(),
        solution,
        iterations,
    })
}

/// Largest relative residual `|z'' + grad V| / max(1, |grad V|)` over the
/// interior samples of an arc, with `z''` from central differences of the
/// velocity in the anomaly.
pub fn ode_residual(arc: &BallisticArc, p: &Params) -> Result<f64> {
    let el = &arc.elements;
    let n = arc.samples.len();
    let mut worst = 0.0f64;
    for i in 1..n.saturating_sub(1) {
        let nu = arc.nu_start + (arc.nu_end - arc.nu_start) * i as f64 / (n - 1) as f64;
        let step = 1e-4 * el.gamma;
        let a = el.state_at_anomaly(nu - step).vel;
        let b = el.state_at_anomaly(nu + step).vel;
        let z = el.state_at_anomaly(nu).pos;
        let nu_dot = el.c_prime / z.norm_squared();
        let acc = (b - a) / (2.0 * step) * nu_dot;
        let gv = grad_potential(&z, p)?;
        worst = worst.max((acc + gv).norm() / gv.norm().max(1.0));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> Params {
        Params { h: 1.0, l: 1.0, beta: 0.01 }
    }

    #[test]
    fn thomas_solves() {
        let diag = [4.0, 4.0, 4.0];
        let off = [1.0, 1.0];
        let mut rhs = [5.0, 6.0, 5.0];
        thomas(&diag, &off, &mut rhs).unwrap();
        for v in rhs {
            assert!((v - 1.0).abs() < 1e-14);
        }
        assert!(thomas(&[1.0, -1.0], &[0.0], &mut [1.0, 1.0]).is_none());
    }

    #[test]
    fn zero_winding_rejected() {
        let z = Vec2::new(0.0, -1.0);
        assert!(matches!(minimize_arc(z, z, 0, &p(), &ArcOptions::default()), Err(Error::Domain(_))));
    }

    #[test]
    fn single_loop_from_the_foot() {
        let z = Vec2::new(0.0, -1.0);
        let arc = minimize_arc(z, z, 1, &p(), &ArcOptions::default()).unwrap();
        let (l, m) = (arc.l_value, arc.m_value);
        assert!((l * l - 2.0 * m).abs() <= 1e-8 * 2.0 * m);
        assert_eq!(arc.solution.winding, 1);
        assert!(ode_residual(&arc.solution, &p()).unwrap() < 1e-5);
        assert!((arc.exact_jacobi_length() - l).abs() < 1e-3 * l);
    }
}
