//! Direct numerical integration of `z'' = -grad V(z)`, used as an oracle for
//! the closed-form propagator.

use ode_solvers::continuous_output_model::ContinuousOutputModel;
use ode_solvers::dop_shared::IntegrationError;
use ode_solvers::{Dopri5, OutputType, System, Vector4};

use super::ArcSample;
use crate::error::{Error, Result};
use crate::params::Params;
use crate::potential::{grad_potential, State, Vec2};

type Y = Vector4<f64>;

struct Flow {
    params: Params,
    /// Stop once the particle has been above the wall and drops below it.
    stop_at_wall: bool,
    armed: bool,
}

impl System<f64, Y> for Flow {
    fn system(&self, _t: f64, y: &Y, dy: &mut Y) {
        let z = Vec2::new(y[0], y[1]);
        let r = z.norm();
        let r2 = r * r;
        let g = z * (1.0 / (r2 * r) + 2.0 * self.params.beta / (r2 * r2));
        dy[0] = y[2];
        dy[1] = y[3];
        dy[2] = -g.x;
        dy[3] = -g.y;
    }

    fn solout(&mut self, _t: f64, y: &Y, _dy: &Y) -> bool {
        if !self.stop_at_wall {
            return false;
        }
        let height = y[1] + self.params.l;
        if height > 0.0 {
            self.armed = true;
        }
        self.armed && height < 0.0
    }
}

fn to_y(s: &State) -> Y {
    Y::new(s.pos.x, s.pos.y, s.vel.x, s.vel.y)
}

struct Unwrapper {
    theta: f64,
    last: Vec2,
}

impl Unwrapper {
    fn new(pos: Vec2) -> Self {
        Unwrapper { theta: pos.y.atan2(pos.x), last: pos }
    }

    fn push(&mut self, pos: Vec2) -> f64 {
        let cross = self.last.x * pos.y - self.last.y * pos.x;
        self.theta += cross.atan2(self.last.dot(&pos));
        self.last = pos;
        self.theta
    }
}

fn samples_from(ts: &[f64], ys: &[Y], start: &State) -> Vec<ArcSample> {
    let mut unwrap = Unwrapper::new(start.pos);
    ts.iter()
        .zip(ys)
        .enumerate()
        .map(|(i, (&t, y))| {
            let pos = Vec2::new(y[0], y[1]);
            let theta_lifted = if i == 0 { unwrap.theta } else { unwrap.push(pos) };
            ArcSample { t, pos, vel: Vec2::new(y[2], y[3]), theta_lifted }
        })
        .collect()
}

/// Per-step error target relative to the requested tolerance; keeps the
/// energy drift over a close pericentre passage within `100 tol`.
const STEP_SAFETY: f64 = 0.1;

fn solver(s: &State, p: &Params, t_end: f64, tol: f64, stop_at_wall: bool) -> Dopri5<f64, Y, Flow> {
    let flow = Flow { params: *p, stop_at_wall, armed: false };
    let tol = tol * STEP_SAFETY;
    Dopri5::from_param(
        flow,
        0.0,
        t_end,
        0.0,
        to_y(s),
        tol,
        tol,
        0.9,
        0.04,
        0.2,
        10.0,
        t_end,
        0.0,
        10_000_000,
        u32::MAX,
        OutputType::Sparse,
    )
}

fn map_error(err: IntegrationError, ts: &[f64], ys: &[Y], start: &State) -> Error {
    match err {
        IntegrationError::StepSizeUnderflow { .. } | IntegrationError::StiffnessDetected { .. } => {
            let last = samples_from(ts, ys, start).pop().unwrap_or(ArcSample {
                t: 0.0,
                pos: start.pos,
                vel: start.vel,
                theta_lifted: start.pos.y.atan2(start.pos.x),
            });
            Error::NearCollision { last: Box::new(last) }
        }
        IntegrationError::MaxNumStepReached { x, n_step } => {
            Error::domain(format!("integrator step budget ({n_step}) exhausted at t = {x}"))
        }
    }
}

fn check_inputs(s: &State, p: &Params, t_end: f64, tol: f64) -> Result<()> {
    p.validate()?;
    s.validate(p)?;
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::domain(format!("tolerance must be positive, got {tol}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::domain(format!("end time must be non-negative, got {t_end}")));
    }
    grad_potential(&s.pos, p)?;
    Ok(())
}

/// Adaptive Dormand–Prince integration from `s` over `[0, t_end]`, one sample
/// per accepted step.
pub fn integrate_ode(s: &State, p: &Params, t_end: f64, tol: f64) -> Result<Vec<ArcSample>> {
    check_inputs(s, p, t_end, tol)?;
    if t_end == 0.0 {
        return Ok(samples_from(&[0.0], &[to_y(s)], s));
    }
    let mut stepper = solver(s, p, t_end, tol, false);
    match stepper.integrate() {
        Ok(_) => Ok(samples_from(stepper.x_out(), stepper.y_out(), s)),
        Err(e) => Err(map_error(e, stepper.x_out(), stepper.y_out(), s)),
    }
}

/// Integrate from a wall state until the next downward crossing of `y = -L`,
/// located by bisection on the dense output. The last sample is the crossing.
pub fn integrate_to_wall(s: &State, p: &Params, t_max: f64, tol: f64) -> Result<Vec<ArcSample>> {
    check_inputs(s, p, t_max, tol)?;
    let mut stepper = solver(s, p, t_max, tol, true);
    let mut dense = ContinuousOutputModel::default();
    if let Err(e) = stepper.integrate_with_continuous_output_model(&mut dense) {
        return Err(map_error(e, stepper.x_out(), stepper.y_out(), s));
    }
    let ts = stepper.x_out().clone();
    let ys = stepper.y_out().clone();
    let n = ts.len();
    let below = |y: &Y| y[1] + p.l < 0.0;
    if n < 2 || !below(&ys[n - 1]) {
        return Err(Error::Escape(format!("no wall crossing before t = {t_max}")));
    }
    let (mut lo, mut hi) = (ts[n - 2], ts[n - 1]);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match dense.evaluate(mid) {
            Some(y) if below(&y) => hi = mid,
            Some(_) => lo = mid,
            None => break,
        }
    }
    let hit = dense.evaluate(hi).unwrap_or(ys[n - 1]);
    let mut ts = ts[..n - 1].to_vec();
    let mut ys = ys[..n - 1].to_vec();
    ts.push(hi);
    ys.push(hit);
    Ok(samples_from(&ts, &ys, s))
}
