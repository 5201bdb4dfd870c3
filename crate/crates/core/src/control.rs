//! Saturated path-following reference law and the first-order attitude proxy.
//!
//! The outer law maps heading / flight-path-angle errors to roll / pitch
//! references:
//!
//! ```text
//! r_d = (1 - alpha) W^-1 sat( W F_z e / (1 - alpha) ),   W = diag(1 / r_max)
//! ```
//!
//! so every output obeys `|W r_d|_inf <= 1 - alpha`, strictly inside the unit
//! polytope, and reduces to `F_z e` whenever nothing saturates.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angle::wrap_pi;
use crate::dynamics::{gamma_target, AircraftState, GliderParams, TRIM_PITCH_OFFSET};
use crate::monitor::EnvelopeLimits;

/// Roll and pitch references handed to the inner loop. `pitch_cmd` is an offset
/// from the best-glide flight-path angle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AttitudeCommand {
    pub roll_cmd: f64,
    pub pitch_cmd: f64,
}

impl AttitudeCommand {
    /// Wings level at best glide.
    pub const SAFE_HOLD: AttitudeCommand = AttitudeCommand {
        roll_cmd: 0.0,
        pitch_cmd: 0.0,
    };

    pub fn is_finite(&self) -> bool {
        self.roll_cmd.is_finite() && self.pitch_cmd.is_finite()
    }
}

/// Gains of the saturated reference law for the (heading, flight-path) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlGains {
    pub f_z: Matrix2<f64>,
    pub alpha: f64,
    /// Saturation bounds: roll, pitch (rad).
    pub r_max: Vector2<f64>,
    /// Optional integral gain on flight-path-angle error; zero disables it.
    pub gamma_ki: f64,
}

impl Default for ControlGains {
    fn default() -> Self {
        Self {
            f_z: Matrix2::new(0.8, 0.0, 0.0, 1.2),
            alpha: 0.2,
            r_max: Vector2::new(30.0_f64.to_radians(), 15.0_f64.to_radians()),
            gamma_ki: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("non-finite control input")]
    NonFinite,
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("saturation bound {index} must be positive, got {value}")]
    BadBound { index: usize, value: f64 },
    #[error("gain matrix is {rows}x{cols}, expected {q} rows and {p} columns")]
    Shape {
        rows: usize,
        cols: usize,
        q: usize,
        p: usize,
    },
}

impl ControlGains {
    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ControlError::BadAlpha(self.alpha));
        }
        for (index, &value) in self.r_max.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ControlError::BadBound { index, value });
            }
        }
        if !self.f_z.iter().all(|v| v.is_finite()) || !self.gamma_ki.is_finite() {
            return Err(ControlError::NonFinite);
        }
        Ok(())
    }

    /// `|W r|_inf` for a command under these gains.
    pub fn weighted_norm(&self, cmd: &AttitudeCommand) -> f64 {
        (cmd.roll_cmd / self.r_max[0])
            .abs()
            .max((cmd.pitch_cmd / self.r_max[1]).abs())
    }
}

/// The saturated law for any q x p gain.
///
/// Returns `(1 - alpha) W^-1 sat(W F_z e / (1 - alpha))` with `W = diag(1/r_max)`
/// and `sat` clamping each component to [-1, 1].
pub fn saturated_reference(
    f_z: &DMatrix<f64>,
    r_max: &[f64],
    alpha: f64,
    error: &DVector<f64>,
) -> Result<DVector<f64>, ControlError> {
    let (q, p) = f_z.shape();
    if q != r_max.len() || p != error.len() {
        return Err(ControlError::Shape {
            rows: q,
            cols: p,
            q: r_max.len(),
            p: error.len(),
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ControlError::BadAlpha(alpha));
    }
    if let Some((index, &value)) = r_max.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(ControlError::BadBound { index, value });
    }
    if !error.iter().all(|v| v.is_finite()) {
        return Err(ControlError::NonFinite);
    }
    let raw = f_z * error;
    let scale = 1.0 - alpha;
    Ok(DVector::from_iterator(
        q,
        raw.iter().zip(r_max).map(|(&u, &bound)| saturate(u, bound, scale)),
    ))
}

/// One component of `(1 - alpha) b sat(u / (b (1 - alpha)))`; inside the
/// linear region `u` is returned untouched.
fn saturate(u: f64, bound: f64, scale: f64) -> f64 {
    if (u / bound / scale).abs() <= 1.0 {
        u
    } else {
        (scale * bound).copysign(u)
    }
}

fn saturate_pair(gains: &ControlGains, raw: Vector2<f64>) -> AttitudeCommand {
    let scale = 1.0 - gains.alpha;
    AttitudeCommand {
        roll_cmd: saturate(raw[0], gains.r_max[0], scale),
        pitch_cmd: saturate(raw[1], gains.r_max[1], scale),
    }
}

/// Tracking error (wrapped heading error, flight-path-angle error).
pub fn tracking_error(desired: (f64, f64), actual: (f64, f64)) -> Vector2<f64> {
    Vector2::new(wrap_pi(desired.0 - actual.0), desired.1 - actual.1)
}

/// Reference roll/pitch for desired `(psi, gamma)` given the actual pair.
pub fn reference_command(
    desired: (f64, f64),
    actual: (f64, f64),
    gains: &ControlGains,
) -> Result<AttitudeCommand, ControlError> {
    if ![desired.0, desired.1, actual.0, actual.1]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(ControlError::NonFinite);
    }
    let e = tracking_error(desired, actual);
    Ok(saturate_pair(gains, gains.f_z * e))
}

/// Integral-augmented variant. Carries its accumulator explicitly; the
/// accumulator is frozen while the pitch channel is saturated.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GammaIntegrator {
    pub accumulated: f64,
}

impl GammaIntegrator {
    pub fn command(
        self,
        desired: (f64, f64),
        actual: (f64, f64),
        gains: &ControlGains,
        dt: f64,
    ) -> Result<(AttitudeCommand, GammaIntegrator), ControlError> {
        if gains.gamma_ki == 0.0 {
            return Ok((reference_command(desired, actual, gains)?, self));
        }
        if ![desired.0, desired.1, actual.0, actual.1, dt]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(ControlError::NonFinite);
        }
        let e = tracking_error(desired, actual);
        let candidate = self.accumulated + e[1] * dt;
        let raw = gains.f_z * e + Vector2::new(0.0, gains.gamma_ki * candidate);
        let cmd = saturate_pair(gains, raw);
        let limit = (1.0 - gains.alpha) * gains.r_max[1];
        let next = if cmd.pitch_cmd.abs() < limit {
            GammaIntegrator {
                accumulated: candidate,
            }
        } else {
            self
        };
        Ok((cmd, next))
    }
}

/// Explicit first-order inner-loop proxy: one Euler step of the roll and
/// flight-path-angle lags toward the command, clamped to the envelope.
pub fn attitude_response(
    state: &AircraftState,
    cmd: &AttitudeCommand,
    params: &GliderParams,
    envelope: &EnvelopeLimits,
    dt: f64,
) -> (f64, f64) {
    let phi = state.phi + dt / params.tau_phi * (cmd.roll_cmd - state.phi);
    let target = gamma_target(params, cmd.pitch_cmd, state.rpm);
    let gamma = state.gamma + dt / params.tau_gamma * (target - state.gamma);
    (
        phi.clamp(envelope.phi_min, envelope.phi_max),
        gamma.clamp(
            envelope.theta_min - TRIM_PITCH_OFFSET,
            envelope.theta_max - TRIM_PITCH_OFFSET,
        ),
    )
}
