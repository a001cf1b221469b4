//! Boltzmann billiard: a particle in the potential `-1/|z| - beta/|z|^2` at
//! positive energy, reflecting elastically off the line `y = -L`.

pub mod elements;
pub mod error;
pub mod orbits;
pub mod params;
pub mod potential;
pub mod propagator;
pub mod symdyn;
pub mod variational;
pub mod winding;
mod roots;

pub use elements::{
    kepler_sweep_angle, max_sweep_angle, momentum_range_k, orbit_elements, tangency_momentum,
    travel_time, OrbitElements,
};
pub use error::{Diagnostics, Error, Result};
pub use params::{normalize, Normalization, Params};
pub use potential::{angular_momentum, energy, grad_potential, potential, speed_at, State, Vec2};
pub use propagator::{
    billiard_map, integrate_ode, integrate_to_wall, propagate_to_wall, reflect, ArcSample,
    BallisticArc,
};
pub use winding::winding_number;
pub use orbits::{
    estimate_beta_bar, find_periodic_orbit, realize_word, total_jacobi_length, OrbitOptions,
    PeriodicOrbit,
};
pub use symdyn::{
    check_semiconjugacy, count_realized_words, omega_metric, project_pi, shift, SymbolWord,
};
