//! Angle helpers.

use std::f64::consts::{PI, TAU};

/// Wraps an angle into (-π, π].
pub fn wrap_pi(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    let wrapped = angle.rem_euclid(TAU);
    if wrapped > PI {
        wrapped - TAU
    } else {
        wrapped
    }
}
