//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use boltzmann::{integrate_to_wall, Params, State};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Polar angle from pericentre to infinity, by quadrature over `u = 1/r`:
/// `int_0^{u_max} C du / sqrt(2h + 2u - C'^2 u^2)`.
pub fn sweep_angle_quadrature(h: f64, beta: f64, c: f64) -> f64 {
    let cp2 = c * c - 2.0 * beta;
    let disc = (1.0 + 2.0 * h * cp2).sqrt();
    let u_max = (1.0 + disc) / cp2;
    let u_min = (1.0 - disc) / cp2;
    // 2h + 2u - C'^2 u^2 = C'^2 (u_max - u)(u - u_min); substitute u = u_max - w^2
    let w_max = u_max.sqrt();
    let f = |w: f64| {
        let u = u_max - w * w;
        2.0 * c.abs() / (cp2.sqrt() * (u - u_min).sqrt())
    };
    quadrature::integrate(f, 0.0, w_max, 1e-13).integral
}

/// Radial travel time from the pericentre to `r1`:
/// `(1/sqrt 2) int_{r_min}^{r1} r dr / sqrt(h r^2 + r - A)`, `A = C'^2 / 2`.
pub fn travel_time_quadrature(r1: f64, h: f64, cp2: f64) -> f64 {
    let a = 0.5 * cp2;
    let disc = (1.0 + 4.0 * h * a).sqrt();
    let r_min = (-1.0 + disc) / (2.0 * h);
    let r_neg = (-1.0 - disc) / (2.0 * h);
    // r = r_min + w^2 removes the square-root singularity at the pericentre
    let f = |w: f64| {
        let r = r_min + w * w;
        2.0 * r / (2.0 * h).sqrt() / (r - r_neg).sqrt()
    };
    quadrature::integrate(f, 0.0, (r1 - r_min).max(0.0).sqrt(), 1e-13).integral
}

/// Wall-to-wall flight by direct integration.
pub fn ode_flight(s: &State, p: &Params, t_max: f64, tol: f64) -> boltzmann::Result<(State, f64)> {
    let out = integrate_to_wall(s, p, t_max, tol)?;
    let last = out.last().unwrap();
    Ok((last.state(), last.t))
}

/// A random upward launch from the wall with `|x| <= x_max`.
pub fn random_launch(r: &mut impl Rng, p: &Params, x_max: f64) -> State {
    let x = r.gen_range(-x_max..x_max);
    let angle = r.gen_range(0.05..std::f64::consts::PI - 0.05);
    State::launch(x, angle, p).unwrap()
}
