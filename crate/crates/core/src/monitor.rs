//! Fault detection, model identification and flight-envelope checks.
//!
//! The monitor is a value advanced by a pure transition function. It watches
//! the engine RPM and the longitudinal deceleration and switches, once and for
//! good, from normal operation to safe mode when either stays past its
//! threshold for longer than the persistence count.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{AircraftState, GliderParams};

pub type ModelId = u8;

/// Box constraints on airspeed, attitude and body rates. All bounds strict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeLimits {
    pub v_min: f64,
    pub v_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for EnvelopeLimits {
    fn default() -> Self {
        let deg = f64::to_radians;
        Self {
            v_min: 30.0,
            v_max: 60.0,
            theta_min: deg(-25.0),
            theta_max: deg(25.0),
            phi_min: deg(-35.0),
            phi_max: deg(35.0),
            p_min: -2.0,
            p_max: 2.0,
            q_min: -1.0,
            q_max: 1.0,
            r_min: -1.0,
            r_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeVariable {
    Airspeed,
    Pitch,
    Roll,
    RollRate,
    PitchRate,
    YawRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSide {
    Lower,
    Upper,
}

/// One violated inequality. `margin` is how far past the bound the value sits
/// (zero when it sits exactly on it).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeViolation {
    pub variable: EnvelopeVariable,
    pub side: BoundSide,
    pub bound: f64,
    pub value: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvelopeError {
    #[error("{0:?}: lower bound must be below upper bound")]
    Inverted(EnvelopeVariable),
    #[error("v_min {v_min} below stall speed {v_stall}")]
    BelowStall { v_min: f64, v_stall: f64 },
}

impl EnvelopeLimits {
    fn rows(&self, state: &AircraftState) -> [(EnvelopeVariable, f64, f64, f64); 6] {
        use EnvelopeVariable::*;
        [
            (Airspeed, state.airspeed, self.v_min, self.v_max),
            (Pitch, state.theta, self.theta_min, self.theta_max),
            (Roll, state.phi, self.phi_min, self.phi_max),
            (RollRate, state.p, self.p_min, self.p_max),
            (PitchRate, state.q, self.q_min, self.q_max),
            (YawRate, state.r, self.r_min, self.r_max),
        ]
    }

    pub fn validate(&self, glider: &GliderParams) -> Result<(), EnvelopeError> {
        let probe = AircraftState::level(0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for (var, _, lo, hi) in self.rows(&probe) {
            if !(lo < hi) {
                return Err(EnvelopeError::Inverted(var));
            }
        }
        if self.v_min < glider.v_stall {
            return Err(EnvelopeError::BelowStall {
                v_min: self.v_min,
                v_stall: glider.v_stall,
            });
        }
        Ok(())
    }

    /// Smallest normalized distance to any bound, as a fraction of that
    /// variable's range. Negative when outside.
    pub fn normalized_margin(&self, state: &AircraftState) -> f64 {
        self.rows(state)
            .iter()
            .map(|&(_, v, lo, hi)| ((v - lo).min(hi - v)) / (hi - lo))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Every violated envelope inequality for `state`; empty iff all hold strictly.
pub fn check_envelope(state: &AircraftState, limits: &EnvelopeLimits) -> Vec<EnvelopeViolation> {
    let mut out = Vec::new();
    for (variable, value, lo, hi) in limits.rows(state) {
        if !(value > lo) {
            out.push(EnvelopeViolation {
                variable,
                side: BoundSide::Lower,
                bound: lo,
                value,
                margin: lo - value,
            });
        }
        if !(value < hi) {
            out.push(EnvelopeViolation {
                variable,
                side: BoundSide::Upper,
                bound: hi,
                value,
                margin: value - hi,
            });
        }
    }
    out
}

/// A stored representative model: linear plant, uncertainty bound, and the
/// envelope and glide parameters that apply once it is identified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultModel {
    pub id: ModelId,
    pub name: String,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub uncertainty_bound: f64,
    pub envelope: EnvelopeLimits,
    pub glider: GliderParams,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model {id}: {what}")]
    Dimensions { id: ModelId, what: String },
    #[error("model {id}: negative uncertainty bound")]
    NegativeBound { id: ModelId },
}

impl FaultModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.a.nrows();
        let dims = |what: String| ModelError::Dimensions { id: self.id, what };
        if self.a.ncols() != n {
            return Err(dims(format!("A is {}x{}, not square", n, self.a.ncols())));
        }
        if self.b.nrows() != n {
            return Err(dims(format!("B has {} rows, A has {}", self.b.nrows(), n)));
        }
        if self.c.ncols() != n {
            return Err(dims(format!("C has {} columns, A has {}", self.c.ncols(), n)));
        }
        if !(self.uncertainty_bound >= 0.0) {
            return Err(ModelError::NegativeBound { id: self.id });
        }
        Ok(())
    }

    /// Output predictions from `x0` under `inputs`, forward-Euler at `dt`.
    /// Produces one output per input sample, starting with `C x0`.
    pub fn predict_outputs(
        &self,
        x0: &DVector<f64>,
        inputs: &[DVector<f64>],
        dt: f64,
    ) -> Vec<DVector<f64>> {
        let mut x = x0.clone();
        inputs
            .iter()
            .map(|u| {
                let y = &self.c * &x;
                x = &x + (&self.a * &x + &self.b * u) * dt;
                y
            })
            .collect()
    }
}

/// Per-sample residual norms `|y_meas - y_pred|` for each model.
pub fn residual_histories(
    models: &[FaultModel],
    measured: &[DVector<f64>],
    x0: &DVector<f64>,
    inputs: &[DVector<f64>],
    dt: f64,
) -> Vec<ResidualHistory> {
    models
        .iter()
        .map(|m| ResidualHistory {
            model: m.id,
            residuals: m
                .predict_outputs(x0, inputs, dt)
                .iter()
                .zip(measured)
                .map(|(pred, meas)| (meas - pred).norm())
                .collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualHistory {
    pub model: ModelId,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IdentifyError {
    #[error("no models to identify against")]
    NoModels,
    #[error("residual histories differ in length")]
    LengthMismatch,
    #[error("need at least {needed} samples, have {have}")]
    TooShort { needed: usize, have: usize },
    /// The two best candidates are within 1% of each other; keep sampling.
    #[error("models {leading} and {runner_up} are within 1% of each other")]
    Ambiguous { leading: ModelId, runner_up: ModelId },
}

/// Relative RMS gap below which identification is reported ambiguous.
pub const AMBIGUITY_GAP: f64 = 0.01;

fn rms(values: &[f64]) -> f64 {
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// Picks the model with the smallest RMS residual over the trailing `window`
/// samples. Exact ties go to the lowest id.
pub fn identify_model(
    histories: &[ResidualHistory],
    window: usize,
) -> Result<ModelId, IdentifyError> {
    let first = histories.first().ok_or(IdentifyError::NoModels)?;
    let len = first.residuals.len();
    if histories.iter().any(|h| h.residuals.len() != len) {
        return Err(IdentifyError::LengthMismatch);
    }
    if len < window || window == 0 {
        return Err(IdentifyError::TooShort {
            needed: window.max(1),
            have: len,
        });
    }
    let mut scored: Vec<(f64, ModelId)> = histories
        .iter()
        .map(|h| (rms(&h.residuals[len - window..]), h.model))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (best, leading) = scored[0];
    if let Some(&(second, runner_up)) = scored.get(1) {
        if second > best && (second - best) < AMBIGUITY_GAP * second {
            return Err(IdentifyError::Ambiguous { leading, runner_up });
        }
    }
    Ok(leading)
}

/// Detection thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub rpm_idle: f64,
    /// Longitudinal deceleration threshold, m/s².
    pub decel: f64,
    /// Persistence count in samples.
    pub n_detect: u32,
    /// Model switched to on engine failure.
    pub engine_out_model: ModelId,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            rpm_idle: 300.0,
            decel: 2.0,
            n_detect: 20,
            engine_out_model: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Normal,
    SafeMode(ModelId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorVerdict {
    pub mode: Mode,
    pub detected_at: Option<f64>,
}

impl Default for MonitorVerdict {
    fn default() -> Self {
        Self {
            mode: Mode::Normal,
            detected_at: None,
        }
    }
}

/// Verdict plus the persistence counters behind it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Monitor {
    pub verdict: MonitorVerdict,
    rpm_low: u32,
    decel_high: u32,
    last_airspeed: Option<(f64, f64)>,
}

impl Monitor {
    /// Feeds one sensor sample. A condition must hold on more than `n_detect`
    /// consecutive samples, i.e. persist for `n_detect` sample intervals, before
    /// safe mode is declared. Safe mode is never left.
    pub fn update(self, sensors: &AircraftState, thresholds: &Thresholds) -> Monitor {
        let mut next = self;
        let decel = match self.last_airspeed {
            Some((t, v)) if sensors.t > t => (v - sensors.airspeed) / (sensors.t - t),
            _ => 0.0,
        };
        next.last_airspeed = Some((sensors.t, sensors.airspeed));
        if let Mode::SafeMode(_) = self.verdict.mode {
            return next;
        }
        next.rpm_low = if sensors.rpm < thresholds.rpm_idle {
            self.rpm_low.saturating_add(1)
        } else {
            0
        };
        next.decel_high = if decel > thresholds.decel {
            self.decel_high.saturating_add(1)
        } else {
            0
        };
        if next.rpm_low > thresholds.n_detect || next.decel_high > thresholds.n_detect {
            next.verdict = MonitorVerdict {
                mode: Mode::SafeMode(thresholds.engine_out_model),
                detected_at: Some(sensors.t),
            };
        }
        next
    }
}
