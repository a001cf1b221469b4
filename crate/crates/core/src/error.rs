use thiserror::Error;

use crate::propagator::ArcSample;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("potential is singular at the origin")]
    Singularity,

    /// `C² ≤ 2β`: the arc falls into the centre and has no pericentre.
    #[error("collisional orbit: C^2 = {c_squared:.6e} <= 2 beta = {two_beta:.6e}")]
    CollisionalOrbit { c_squared: f64, two_beta: f64 },

    /// The particle never comes back to the wall (or only touches it tangentially).
    #[error("orbit escapes: {0}")]
    Escape(String),

    #[error("integrator step size underflow near the centre at t = {}", last.t)]
    NearCollision { last: Box<ArcSample> },

    #[error("optimizer failed: {0}")]
    Optimizer(Diagnostics),

    #[error("orbit lost after {} symbols: {reason}", symbols.len())]
    PartialWord { symbols: Vec<i64>, reason: String },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for errors that come from the dynamics itself (escape, collision)
    /// rather than from bad input or a numerical solver.
    pub fn is_dynamical(&self) -> bool {
        matches!(
            self,
            Error::CollisionalOrbit { .. }
                | Error::Escape(_)
                | Error::NearCollision { .. }
                | Error::PartialWord { .. }
        )
    }
}

/// What an optimizer saw when it gave up.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct Diagnostics {
    pub stage: String,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub value: f64,
    pub message: String,
}

impl std::fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} after {} iterations (value {:.6e}, |grad| {:.3e}): {}",
            self.stage, self.iterations, self.value, self.gradient_norm, self.message
        )
    }
}
