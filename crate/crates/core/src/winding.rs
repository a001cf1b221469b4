//! Winding number of an open curve about the origin, closed by the straight
//! segment from its last point back to its first.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::potential::Vec2;

/// Signed polar angle swept along the straight segment `a -> b`.
///
/// Fails when the segment runs through the origin.
pub fn segment_angle(a: &Vec2, b: &Vec2) -> Result<f64> {
    if a.norm_squared() == 0.0 || b.norm_squared() == 0.0 {
        return Err(Error::domain("curve vertex at the origin"));
    }
    let cross = a.x * b.y - a.y * b.x;
    let dot = a.dot(b);
    if dot < 0.0 && cross.abs() <= 1e-14 * a.norm() * b.norm() {
        return Err(Error::domain("curve segment passes through the origin"));
    }
    Ok(cross.atan2(dot))
}

/// `round((lifted change + closing angle) / 2 pi)` from a known lifted change
/// of polar angle between `start` and `end`.
pub fn winding_from_lift(delta_theta: f64, start: &Vec2, end: &Vec2) -> Result<i64> {
    let closing = segment_angle(end, start)?;
    Ok(((delta_theta + closing) / TAU).round() as i64)
}

pub fn winding_number(curve: &[Vec2]) -> Result<i64> {
    let (first, last) = match (curve.first(), curve.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::domain("empty curve")),
    };
    let mut lifted = 0.0;
    for w in curve.windows(2) {
        lifted += segment_angle(&w[0], &w[1])?;
    }
    if curve.len() == 1 {
        segment_angle(first, first)?;
    }
    winding_from_lift(lifted, first, last)
}
