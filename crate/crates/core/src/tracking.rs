//! Guidance plus reference law: one call per control step.

use thiserror::Error;

use crate::control::{AttitudeCommand, ControlError, ControlGains, GammaIntegrator};
use crate::dynamics::{AircraftState, GliderParams};
use crate::guidance::{
    desired_flight_path, phase_transition, FlightPathTarget, GuidanceError, GuidancePhase,
    MissionPlan,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackingError {
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

/// Output of one tracking step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingOutput {
    pub phase: GuidancePhase,
    /// `None` once on the ground.
    pub target: Option<FlightPathTarget>,
    pub command: AttitudeCommand,
}

/// Path-following state carried between steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tracker {
    pub phase: GuidancePhase,
    pub integrator: GammaIntegrator,
}

impl Default for Tracker {
    fn default() -> Self {
        Self {
            phase: GuidancePhase::Cruise,
            integrator: GammaIntegrator::default(),
        }
    }
}

impl Tracker {
    pub fn step(
        self,
        state: &AircraftState,
        plan: &MissionPlan,
        params: &GliderParams,
        gains: &ControlGains,
        dt: f64,
    ) -> Result<(TrackingOutput, Tracker), TrackingError> {
        let phase = phase_transition(self.phase, state, plan);
        if phase == GuidancePhase::Terminal {
            let out = TrackingOutput {
                phase,
                target: None,
                command: AttitudeCommand::SAFE_HOLD,
            };
            return Ok((out, Tracker { phase, ..self }));
        }
        let target = desired_flight_path(phase, state, plan, params)?;
        let (command, integrator) = self.integrator.command(
            (target.psi, target.gamma),
            (state.psi, state.gamma),
            gains,
            dt,
        )?;
        Ok((
            TrackingOutput {
                phase,
                target: Some(target),
                command,
            },
            Tracker { phase, integrator },
        ))
    }
}
