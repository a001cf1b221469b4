//! Wall-to-wall propagation, reflection and the billiard map.
//!
//! Arcs are computed from the closed-form precessing conic. The wall crossing
//! is found on the anomaly `nu` through
//!
//! ```text
//! g(nu) = (y + L) / r = sin theta(nu) + L (1 + e cos nu) / C'^2
//! ```
//!
//! which stays bounded up to the asymptote, so escape detection is exact.

mod ode;

pub use ode::{integrate_ode, integrate_to_wall};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::elements::{orbit_elements, OrbitElements};
use crate::error::{Error, Result};
use crate::params::Params;
use crate::potential::{State, Vec2};
use crate::winding::winding_from_lift;

pub const DEFAULT_SAMPLES: usize = 256;

/// Allowed distance of a "wall" state from `y = -L`, relative to `L`.
pub const WALL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcSample {
    pub t: f64,
    pub pos: Vec2,
    pub vel: Vec2,
    /// Polar angle, unwrapped along the arc.
    pub theta_lifted: f64,
}

impl ArcSample {
    pub fn state(&self) -> State {
        State { pos: self.pos, vel: self.vel }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallisticArc {
    pub start: State,
    pub end: State,
    pub flight_time: f64,
    pub winding: i64,
    pub samples: Vec<ArcSample>,
    pub elements: OrbitElements,
    /// Anomalies of the start and end points on the conic.
    pub nu_start: f64,
    pub nu_end: f64,
}

impl BallisticArc {
    /// Lifted polar angle swept between the two wall contacts.
    pub fn swept_angle(&self) -> f64 {
        (self.nu_end - self.nu_start) / self.elements.gamma
    }

    pub fn min_radius(&self) -> f64 {
        if self.nu_start <= 0.0 && self.nu_end >= 0.0 {
            self.elements.r_min
        } else {
            self.start.pos.norm().min(self.end.pos.norm())
        }
    }
}

pub fn on_wall(pos: &Vec2, p: &Params) -> bool {
    (pos.y + p.l).abs() <= WALL_TOLERANCE * p.l
}

/// Propagate from the wall to the next downward wall crossing with the default
/// sample count.
pub fn propagate_to_wall(s: &State, p: &Params) -> Result<BallisticArc> {
    propagate_to_wall_sampled(s, p, DEFAULT_SAMPLES)
}

pub fn propagate_to_wall_sampled(s: &State, p: &Params, n_samples: usize) -> Result<BallisticArc> {
    p.validate()?;
    s.validate(p)?;
    if !on_wall(&s.pos, p) {
        return Err(Error::domain(format!("launch point y = {} is not on the wall", s.pos.y)));
    }
    if s.vel.y < 0.0 {
        return Err(Error::domain("launch velocity points into the wall"));
    }
    if n_samples < 2 {
        return Err(Error::domain("an arc needs at least two samples"));
    }
    let el = orbit_elements(s, p)?;
    let nu0 = el.anomaly_of(s);
    let nu_inf = el.asymptote_anomaly();
    let g = |nu: f64| {
        el.angle_at_anomaly(nu).sin() + p.l * (1.0 + el.e * nu.cos()) / (el.c_prime * el.c_prime)
    };

    let step = el.gamma * PI / 720.0;
    // first grid point strictly above the wall
    let mut first = step;
    while g(nu0 + first) <= 0.0 {
        first *= 0.5;
        if first < 1e-14 * step {
            return Err(Error::Escape("launch grazes the wall".into()));
        }
    }
    let mut lo = nu0 + first;
    let mut hi = None;
    while lo < nu_inf {
        let next = (lo + step).min(nu_inf);
        if g(next) <= 0.0 {
            hi = Some(next);
            break;
        }
        lo = next;
    }
    let Some(mut hi) = hi else {
        return Err(Error::Escape(format!(
            "no wall crossing before the asymptote (C = {:.6})",
            el.c
        )));
    };
    if hi >= nu_inf {
        // asymptote parallel to or pointing into the wall at infinity
        hi = nu_inf * (1.0 - 1e-15);
        if g(hi) > 0.0 {
            return Err(Error::Escape("asymptote parallel to the wall".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let nu1 = hi;
    let mut end = el.state_at_anomaly(nu1);
    let speed = end.vel.norm();
    if end.vel.y > -1e-9 * speed {
        return Err(Error::Escape("tangential contact with the wall".into()));
    }
    end.pos.y = -p.l;

    let theta0 = s.pos.y.atan2(s.pos.x);
    let t0 = el.time_at_anomaly(nu0);
    let mut samples = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let (nu, state) = if i == 0 {
            (nu0, *s)
        } else if i == n_samples - 1 {
            (nu1, end)
        } else {
            let nu = nu0 + (nu1 - nu0) * i as f64 / (n_samples - 1) as f64;
            (nu, el.state_at_anomaly(nu))
        };
        samples.push(ArcSample {
            t: el.time_at_anomaly(nu) - t0,
            pos: state.pos,
            vel: state.vel,
            theta_lifted: theta0 + el.direction * (nu - nu0) / el.gamma,
        });
    }
    let delta_theta = el.direction * (nu1 - nu0) / el.gamma;
    let winding = winding_from_lift(delta_theta, &s.pos, &end.pos)?;
    Ok(BallisticArc {
        start: *s,
        end,
        flight_time: samples[n_samples - 1].t,
        winding,
        samples,
        elements: el,
        nu_start: nu0,
        nu_end: nu1,
    })
}

/// Elastic reflection off the wall.
pub fn reflect(s: &State, p: &Params) -> Result<State> {
    if !on_wall(&s.pos, p) {
        return Err(Error::domain(format!("reflection point y = {} is not on the wall", s.pos.y)));
    }
    if !(s.vel.y < 0.0) {
        return Err(Error::domain("reflection needs an incoming velocity"));
    }
    Ok(State { pos: s.pos, vel: Vec2::new(s.vel.x, -s.vel.y) })
}

/// One step of the first-return map: propagate, then reflect.
pub fn billiard_map(s: &State, p: &Params) -> Result<(State, BallisticArc)> {
    let arc = propagate_to_wall(s, p)?;
    Ok((reflect(&arc.end, p)?, arc))
}
