//! Point-mass glider plant.
//!
//! Three-degree-of-freedom coordinated-turn kinematics with first-order roll and
//! flight-path-angle lags. Airspeed is held at best-glide speed plus whatever
//! airspeed perturbation the wind field injects. Integrated with classic RK4 at a
//! fixed step; everything here is a pure function of its inputs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angle::wrap_pi;
use crate::control::AttitudeCommand;
use crate::weather::WindSample;

/// Standard gravity, m/s².
pub const STANDARD_GRAVITY: f64 = 9.80665;

/// Constant offset between flight-path angle and reported pitch (trim angle of attack).
pub const TRIM_PITCH_OFFSET: f64 = 4.0 * std::f64::consts::PI / 180.0;

/// Largest step the integrator accepts, seconds.
pub const MAX_STEP: f64 = 0.1;

/// Kinematic state of the aircraft in a local north-east-up frame anchored at the
/// scenario datum. Angles in radians, rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AircraftState {
    pub t: f64,
    pub north: f64,
    pub east: f64,
    /// Altitude above the datum.
    pub alt: f64,
    pub airspeed: f64,
    /// Heading, clockwise from north, in (-π, π].
    pub psi: f64,
    /// Flight-path angle; negative while descending.
    pub gamma: f64,
    pub phi: f64,
    pub theta: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub rpm: f64,
}

impl AircraftState {
    /// Straight-and-level state at `airspeed` with the engine at `rpm`.
    pub fn level(north: f64, east: f64, alt: f64, psi: f64, airspeed: f64, rpm: f64) -> Self {
        Self {
            t: 0.0,
            north,
            east,
            alt,
            airspeed,
            psi: wrap_pi(psi),
            gamma: 0.0,
            phi: 0.0,
            theta: TRIM_PITCH_OFFSET,
            p: 0.0,
            q: 0.0,
            r: 0.0,
            rpm,
        }
    }

    pub fn position(&self) -> nalgebra::Vector2<f64> {
        nalgebra::Vector2::new(self.north, self.east)
    }

    /// Specific total energy, alt + V²/2g (meters).
    pub fn specific_energy(&self, g: f64) -> f64 {
        self.alt + self.airspeed * self.airspeed / (2.0 * g)
    }

    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.north,
            self.east,
            self.alt,
            self.airspeed,
            self.psi,
            self.gamma,
            self.phi,
            self.theta,
            self.p,
            self.q,
            self.r,
            self.rpm,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Best-glide performance and attitude-response constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GliderParams {
    /// Best-glide airspeed, m/s.
    pub v_opt: f64,
    /// Best-glide flight-path angle, rad (negative).
    pub gamma_opt: f64,
    /// Still-air glide ratio, -cos(gamma_opt)/sin(gamma_opt).
    pub glide_ratio: f64,
    pub v_stall: f64,
    pub tau_phi: f64,
    pub tau_gamma: f64,
    /// Steepest flight-path angle the approach logic may request, rad.
    pub gamma_min: f64,
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamsError {
    #[error("stall speed {v_stall} must be below best-glide speed {v_opt}")]
    StallAboveBestGlide { v_stall: f64, v_opt: f64 },
    #[error("best-glide flight-path angle must be negative, got {0}")]
    NonNegativeGamma(f64),
    #[error("glide ratio {ratio} disagrees with gamma_opt (expected {expected})")]
    InconsistentGlideRatio { ratio: f64, expected: f64 },
    #[error("time constant {name} must be positive, got {value}")]
    NonPositiveTimeConstant { name: &'static str, value: f64 },
    #[error("gamma_min {gamma_min} must be steeper than gamma_opt {gamma_opt}")]
    GammaMinTooShallow { gamma_min: f64, gamma_opt: f64 },
}

impl GliderParams {
    /// Builds a parameter set from a glide ratio; gamma_opt = -atan(1/ratio).
    pub fn from_glide_ratio(v_opt: f64, glide_ratio: f64) -> Self {
        Self {
            v_opt,
            gamma_opt: -(1.0 / glide_ratio).atan(),
            glide_ratio,
            v_stall: 30.0,
            tau_phi: 0.5,
            tau_gamma: 0.5,
            gamma_min: -30.0_f64.to_radians(),
            g: STANDARD_GRAVITY,
        }
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        if !(self.v_stall < self.v_opt) {
            return Err(ParamsError::StallAboveBestGlide {
                v_stall: self.v_stall,
                v_opt: self.v_opt,
            });
        }
        if !(self.gamma_opt < 0.0) {
            return Err(ParamsError::NonNegativeGamma(self.gamma_opt));
        }
        let expected = -self.gamma_opt.cos() / self.gamma_opt.sin();
        if !(self.glide_ratio > 0.0) || (self.glide_ratio - expected).abs() > 1e-9 {
            return Err(ParamsError::InconsistentGlideRatio {
                ratio: self.glide_ratio,
                expected,
            });
        }
        for (name, value) in [("tau_phi", self.tau_phi), ("tau_gamma", self.tau_gamma)] {
            if !(value > 0.0) {
                return Err(ParamsError::NonPositiveTimeConstant { name, value });
            }
        }
        if !(self.gamma_min < self.gamma_opt) {
            return Err(ParamsError::GammaMinTooShallow {
                gamma_min: self.gamma_min,
                gamma_opt: self.gamma_opt,
            });
        }
        Ok(())
    }

    /// Turn rate of a coordinated turn at bank `phi` and airspeed `v`.
    pub fn turn_rate(&self, phi: f64, v: f64) -> f64 {
        self.g * phi.tan() / v
    }
}

impl Default for GliderParams {
    fn default() -> Self {
        Self::from_glide_ratio(35.0, 9.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("step size {0} outside (0, {MAX_STEP}]")]
    BadStep(f64),
    #[error("non-finite state derivative (check wind and command inputs)")]
    NonFinite,
}

/// Result of one integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Airborne(AircraftState),
    /// The step crossed the touchdown elevation; the state is interpolated to the
    /// crossing and is terminal.
    Touchdown(AircraftState),
}

impl StepOutcome {
    pub fn state(&self) -> &AircraftState {
        match self {
            StepOutcome::Airborne(s) | StepOutcome::Touchdown(s) => s,
        }
    }

    pub fn is_touchdown(&self) -> bool {
        matches!(self, StepOutcome::Touchdown(_))
    }
}

// Integrated sub-state: north, east, alt, psi, gamma, phi.
type Core = [f64; 6];

fn derivatives(
    x: &Core,
    v: f64,
    roll_cmd: f64,
    gamma_cmd: f64,
    wind: &WindSample,
    params: &GliderParams,
) -> Core {
    let [_, _, _, psi, gamma, phi] = *x;
    let horizontal = v * gamma.cos();
    [
        horizontal * psi.cos() + wind.w_n,
        horizontal * psi.sin() + wind.w_e,
        v * gamma.sin() / phi.cos() + wind.w_up,
        params.turn_rate(phi, v),
        (gamma_cmd - gamma) / params.tau_gamma,
        (roll_cmd - phi) / params.tau_phi,
    ]
}

fn axpy(x: &Core, k: &Core, h: f64) -> Core {
    std::array::from_fn(|i| x[i] + h * k[i])
}

/// Flight-path angle the lag settles to for a pitch offset. With the engine
/// stopped the glider cannot hold a climb, so the target is capped at level.
pub fn gamma_target(params: &GliderParams, pitch_cmd: f64, rpm: f64) -> f64 {
    let target = params.gamma_opt + pitch_cmd;
    if rpm <= 0.0 {
        target.min(0.0)
    } else {
        target
    }
}

/// Advances the plant by `dt` seconds with the command and wind held constant.
///
/// `ground` is the touchdown elevation. A step that would cross it returns the
/// linearly interpolated crossing state as [`StepOutcome::Touchdown`].
pub fn step(
    state: &AircraftState,
    cmd: &AttitudeCommand,
    wind: &WindSample,
    params: &GliderParams,
    dt: f64,
    ground: f64,
) -> Result<StepOutcome, DynamicsError> {
    if !(dt > 0.0 && dt <= MAX_STEP) {
        return Err(DynamicsError::BadStep(dt));
    }
    if state.alt <= ground {
        return Ok(StepOutcome::Touchdown(*state));
    }
    let v = params.v_opt + wind.dv;
    let gamma_cmd = gamma_target(params, cmd.pitch_cmd, state.rpm);
    let x0: Core = [
        state.north,
        state.east,
        state.alt,
        state.psi,
        state.gamma,
        state.phi,
    ];
    let k1 = derivatives(&x0, v, cmd.roll_cmd, gamma_cmd, wind, params);
    let k2 = derivatives(&axpy(&x0, &k1, dt / 2.0), v, cmd.roll_cmd, gamma_cmd, wind, params);
    let k3 = derivatives(&axpy(&x0, &k2, dt / 2.0), v, cmd.roll_cmd, gamma_cmd, wind, params);
    let k4 = derivatives(&axpy(&x0, &k3, dt), v, cmd.roll_cmd, gamma_cmd, wind, params);
    let finite = |k: &Core| k.iter().all(|d| d.is_finite());
    if !(finite(&k1) && finite(&k2) && finite(&k3) && finite(&k4)) {
        return Err(DynamicsError::NonFinite);
    }
    let x1: Core = std::array::from_fn(|i| {
        x0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    });
    let rates = derivatives(&x1, v, cmd.roll_cmd, gamma_cmd, wind, params);
    if !finite(&rates) {
        return Err(DynamicsError::NonFinite);
    }

    let mut next = AircraftState {
        t: state.t + dt,
        north: x1[0],
        east: x1[1],
        alt: x1[2],
        airspeed: v,
        psi: wrap_pi(x1[3]),
        gamma: x1[4],
        phi: x1[5],
        theta: x1[4] + TRIM_PITCH_OFFSET,
        p: rates[5],
        q: rates[4],
        r: rates[3],
        rpm: state.rpm,
    };

    if next.alt > ground {
        return Ok(StepOutcome::Airborne(next));
    }
    let frac = (state.alt - ground) / (state.alt - next.alt);
    let lerp = |a: f64, b: f64| a + frac * (b - a);
    next.t = state.t + frac * dt;
    next.north = lerp(state.north, next.north);
    next.east = lerp(state.east, next.east);
    next.alt = ground;
    next.psi = wrap_pi(state.psi + frac * wrap_pi(next.psi - state.psi));
    next.gamma = lerp(state.gamma, next.gamma);
    next.phi = lerp(state.phi, next.phi);
    next.theta = next.gamma + TRIM_PITCH_OFFSET;
    Ok(StepOutcome::Touchdown(next))
}

/// Still-air, wings-level glide distance from `alt_agl` meters above the ground.
pub fn glide_range(alt_agl: f64, params: &GliderParams) -> f64 {
    alt_agl * params.glide_ratio
}
