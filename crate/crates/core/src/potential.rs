use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Params;

pub type Vec2 = Vector2<f64>;

/// Position and velocity of the particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub pos: Vec2,
    pub vel: Vec2,
}

impl State {
    pub fn new(pos: Vec2, vel: Vec2) -> Self {
        State { pos, vel }
    }

    pub fn from_xy(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        State { pos: Vec2::new(x, y), vel: Vec2::new(vx, vy) }
    }

    /// Check the invariants that depend on the wall position.
    pub fn validate(&self, p: &Params) -> Result<()> {
        if self.pos.x == 0.0 && self.pos.y == 0.0 {
            return Err(Error::Singularity);
        }
        if !(self.pos.iter().chain(self.vel.iter()).all(|v| v.is_finite())) {
            return Err(Error::domain("state has non-finite components"));
        }
        if self.pos.y < -p.l * (1.0 + 1e-12) {
            return Err(Error::domain(format!(
                "position y = {} lies below the wall y = {}",
                self.pos.y, -p.l
            )));
        }
        Ok(())
    }

    /// Launch from the wall point `(x, -L)` with speed fixed by the energy and
    /// direction `angle` measured from the +x axis.
    pub fn launch(x: f64, angle: f64, p: &Params) -> Result<Self> {
        let pos = Vec2::new(x, -p.l);
        let speed = speed_at(&pos, p)?;
        Ok(State { pos, vel: Vec2::new(angle.cos(), angle.sin()) * speed })
    }

    pub fn mirrored(&self) -> Self {
        State {
            pos: Vec2::new(-self.pos.x, self.pos.y),
            vel: Vec2::new(-self.vel.x, self.vel.y),
        }
    }
}

pub fn potential(z: &Vec2, p: &Params) -> Result<f64> {
    let r = z.norm();
    if r == 0.0 {
        return Err(Error::Singularity);
    }
    Ok(-1.0 / r - p.beta / (r * r))
}

/// `grad V(z) = z (1/|z|^3 + 2 beta/|z|^4)`; the force `-grad V` points at the origin.
pub fn grad_potential(z: &Vec2, p: &Params) -> Result<Vec2> {
    let r = z.norm();
    if r == 0.0 {
        return Err(Error::Singularity);
    }
    let r2 = r * r;
    Ok(z * (1.0 / (r2 * r) + 2.0 * p.beta / (r2 * r2)))
}

pub fn energy(s: &State, p: &Params) -> Result<f64> {
    Ok(0.5 * s.vel.norm_squared() + potential(&s.pos, p)?)
}

pub fn angular_momentum(s: &State) -> f64 {
    s.pos.x * s.vel.y - s.pos.y * s.vel.x
}

/// Speed at `z` on the energy shell `h`.
pub fn speed_at(z: &Vec2, p: &Params) -> Result<f64> {
    let kinetic = p.h - potential(z, p)?;
    Ok((2.0 * kinetic).sqrt())
}
