//! Onboard loop: monitor, site selection at detection, safe hold, tracking.
//!
//! The same [`Autopilot`] runs in-process and behind the datagram bridge, so
//! both paths issue identical commands for identical state streams.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{AttitudeCommand, ControlGains};
use crate::dynamics::{AircraftState, GliderParams};
use crate::guidance::{FlightPathTarget, GuidancePhase, LandingSite, MissionDefaults, MissionPlan};
use crate::monitor::{EnvelopeLimits, Mode, Monitor, Thresholds};
use crate::planner::{evaluate_sites, FeasibilityReport, PlanError, PredictionConfig, PredictionContext};
use crate::tracking::{Tracker, TrackingError};

/// Static autopilot configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct AutopilotConfig {
    pub params: GliderParams,
    pub gains: ControlGains,
    pub envelope: EnvelopeLimits,
    pub thresholds: Thresholds,
    pub sites: Vec<LandingSite>,
    pub mission: MissionDefaults,
    pub prediction: PredictionConfig,
    /// Seconds between detection and the plan taking over from safe hold.
    pub plan_delay: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutopilotError {
    #[error("no feasible landing site")]
    NoFeasibleSite(Box<FeasibilityReport>),
    #[error(transparent)]
    Plan(PlanError),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
}

impl From<PlanError> for AutopilotError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::NoFeasibleSite(r) => AutopilotError::NoFeasibleSite(r),
            other => AutopilotError::Plan(other),
        }
    }
}

/// What the autopilot is doing this step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlStage {
    /// Engine running: straight and level.
    Normal,
    /// Failure detected, plan not yet engaged: wings level at best glide.
    SafeHold,
    /// Tracking the landing plan.
    Tracking,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AutopilotOutput {
    pub stage: ControlStage,
    pub phase: GuidancePhase,
    pub target: Option<FlightPathTarget>,
    pub command: AttitudeCommand,
}

/// Engaged landing plan and when it takes over.
#[derive(Debug, Clone, PartialEq)]
pub struct EngagedPlan {
    pub plan: MissionPlan,
    pub engage_at: f64,
    pub report: FeasibilityReport,
    /// Predicted seconds from detection to touchdown.
    pub predicted_landing_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Autopilot {
    pub config: AutopilotConfig,
    pub monitor: Monitor,
    pub tracker: Tracker,
    pub engaged: Option<EngagedPlan>,
}

impl Autopilot {
    pub fn new(config: AutopilotConfig) -> Self {
        Self {
            config,
            monitor: Monitor::default(),
            tracker: Tracker::default(),
            engaged: None,
        }
    }

    fn select_plan(&self, at: &AircraftState) -> Result<EngagedPlan, AutopilotError> {
        let c = &self.config;
        let plans: Vec<MissionPlan> = c
            .sites
            .iter()
            .map(|s| MissionPlan::for_site(*s, at.position(), &c.mission))
            .collect();
        let ctx = PredictionContext {
            params: &c.params,
            gains: &c.gains,
            envelope: &c.envelope,
            config: &c.prediction,
        };
        let report = evaluate_sites(at, &plans, &ctx)?;
        let id = report.selected.expect("evaluate_sites returns a selection");
        let plan = *plans.iter().find(|p| p.site.id == id).expect("selected plan");
        let predicted_landing_time = report
            .assessment(id)
            .and_then(|a| a.predicted_landing_time)
            .expect("selected site is feasible");
        Ok(EngagedPlan {
            plan,
            engage_at: at.t + c.plan_delay,
            report,
            predicted_landing_time,
        })
    }

    /// One control step from a sensor sample.
    pub fn step(&mut self, sensors: &AircraftState, dt: f64) -> Result<AutopilotOutput, AutopilotError> {
        self.monitor = self.monitor.update(sensors, &self.config.thresholds);
        if self.monitor.verdict.mode == Mode::Normal {
            return Ok(AutopilotOutput {
                stage: ControlStage::Normal,
                phase: self.tracker.phase,
                target: None,
                command: AttitudeCommand {
                    roll_cmd: 0.0,
                    pitch_cmd: -self.config.params.gamma_opt,
                },
            });
        }
        if self.engaged.is_none() {
            self.engaged = Some(self.select_plan(sensors)?);
        }
        let engaged = self.engaged.as_ref().expect("plan engaged above");
        if sensors.t < engaged.engage_at {
            return Ok(AutopilotOutput {
                stage: ControlStage::SafeHold,
                phase: self.tracker.phase,
                target: None,
                command: AttitudeCommand::SAFE_HOLD,
            });
        }
        let c = &self.config;
        let (out, tracker) = self.tracker.step(sensors, &engaged.plan, &c.params, &c.gains, dt)?;
        self.tracker = tracker;
        Ok(AutopilotOutput {
            stage: ControlStage::Tracking,
            phase: out.phase,
            target: out.target,
            command: out.command,
        })
    }
}
