//! Offline site feasibility: closed-loop prediction in calm air with a reduced
//! attitude model, landing-time estimation and minimum-time site selection.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angle::wrap_pi;
use crate::control::{attitude_response, AttitudeCommand, ControlGains};
use crate::dynamics::{glide_range, step, AircraftState, GliderParams, StepOutcome};
use crate::guidance::{GuidancePhase, LandingSite, MissionPlan};
use crate::monitor::{check_envelope, EnvelopeLimits, EnvelopeVariable};
use crate::tracking::Tracker;
use crate::weather::WindSample;

/// Prediction settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictionConfig {
    pub dt: f64,
    pub t_max: f64,
    /// Horizontal touchdown tolerance around the site, m.
    pub land_radius: f64,
    /// Touchdown heading tolerance around the runway heading, rad.
    pub heading_tolerance: f64,
    /// Keep every n-th predicted state in the report.
    pub sample_every: usize,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            t_max: 1800.0,
            land_radius: 150.0,
            heading_tolerance: 30.0_f64.to_radians(),
            sample_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Infeasibility {
    /// Reached the site elevation away from the site (short or long).
    GroundShortfall { miss_distance: f64 },
    /// Touched down on the site but not aligned with the runway.
    Misaligned { heading_error: f64 },
    Timeout,
    EnvelopeViolation { t: f64, variable: EnvelopeVariable },
    Numerical { detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Feasible,
    Infeasible(Infeasibility),
}

impl Verdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Verdict::Feasible)
    }
}

/// Sparse predicted path point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub t: f64,
    pub north: f64,
    pub east: f64,
    pub alt: f64,
    pub phase: GuidancePhase,
}

/// Result of one closed-loop prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub verdict: Verdict,
    /// Seconds from engine-out to touchdown; only set when feasible.
    pub landing_time: Option<f64>,
    pub touchdown: Option<AircraftState>,
    pub trajectory: Vec<PathSample>,
    /// Distinct phases in order of appearance.
    pub phases: Vec<GuidancePhase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteAssessment {
    pub site_id: u32,
    pub verdict: Verdict,
    pub predicted_landing_time: Option<f64>,
    pub predicted_trajectory: Vec<PathSample>,
    /// Wall-clock seconds spent predicting this site.
    pub compute_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub sites: Vec<SiteAssessment>,
    pub selected: Option<u32>,
}

impl FeasibilityReport {
    /// Equality ignoring wall-clock compute times.
    pub fn same_outcome(&self, other: &FeasibilityReport) -> bool {
        self.selected == other.selected
            && self.sites.len() == other.sites.len()
            && self.sites.iter().zip(&other.sites).all(|(a, b)| {
                a.site_id == b.site_id
                    && a.verdict == b.verdict
                    && a.predicted_landing_time == b.predicted_landing_time
                    && a.predicted_trajectory == b.predicted_trajectory
            })
    }

    pub fn assessment(&self, site_id: u32) -> Option<&SiteAssessment> {
        self.sites.iter().find(|s| s.site_id == site_id)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("no candidate landing sites")]
    NoSites,
    #[error("duplicate site id {0}")]
    DuplicateSite(u32),
    #[error("no feasible landing site")]
    NoFeasibleSite(Box<FeasibilityReport>),
    #[error("invalid prediction config: {0}")]
    BadConfig(&'static str),
}

impl PredictionConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        if !(self.dt > 0.0 && self.dt <= crate::dynamics::MAX_STEP) {
            return Err(PlanError::BadConfig("dt must lie in (0, 0.1]"));
        }
        if !(self.t_max > 0.0) {
            return Err(PlanError::BadConfig("t_max must be positive"));
        }
        if !(self.land_radius > 0.0 && self.heading_tolerance > 0.0) {
            return Err(PlanError::BadConfig("tolerances must be positive"));
        }
        if self.sample_every == 0 {
            return Err(PlanError::BadConfig("sample_every must be at least 1"));
        }
        Ok(())
    }
}

/// Shared inputs of every site prediction.
#[derive(Debug, Clone, Copy)]
pub struct PredictionContext<'a> {
    pub params: &'a GliderParams,
    pub gains: &'a ControlGains,
    pub envelope: &'a EnvelopeLimits,
    pub config: &'a PredictionConfig,
}

/// Classifies a touchdown state against the site.
pub fn classify_touchdown(
    touchdown: &AircraftState,
    site: &LandingSite,
    config: &PredictionConfig,
) -> Verdict {
    let miss = (touchdown.position() - site.position()).norm();
    if miss > config.land_radius {
        return Verdict::Infeasible(Infeasibility::GroundShortfall {
            miss_distance: miss,
        });
    }
    let heading_error = wrap_pi(touchdown.psi - site.runway_heading).abs();
    if heading_error > config.heading_tolerance {
        return Verdict::Infeasible(Infeasibility::Misaligned { heading_error });
    }
    Verdict::Feasible
}

/// Runs the reduced closed loop to touchdown without the still-air pre-screen.
///
/// Each step first moves roll and flight-path angle one explicit lag step
/// toward the command, then integrates the point-mass kinematics with that
/// attitude held.
pub fn simulate_landing(
    init: &AircraftState,
    plan: &MissionPlan,
    ctx: &PredictionContext<'_>,
) -> Prediction {
    let PredictionContext {
        params,
        gains,
        envelope,
        config,
    } = *ctx;
    let site = &plan.site;
    // The prediction is of the engine-out glide whatever the sensed rpm.
    let mut state = AircraftState { rpm: 0.0, ..*init };
    let mut tracker = Tracker::default();
    let mut trajectory = Vec::new();
    let mut phases = Vec::new();
    let mut n = 0usize;
    let infeasible = |reason, trajectory, phases| Prediction {
        verdict: Verdict::Infeasible(reason),
        landing_time: None,
        touchdown: None,
        trajectory,
        phases,
    };

    loop {
        if state.t - init.t > config.t_max {
            return infeasible(Infeasibility::Timeout, trajectory, phases);
        }
        let (out, next_tracker) = match tracker.step(&state, plan, params, gains, config.dt) {
            Ok(v) => v,
            Err(e) => {
                let detail = e.to_string();
                return infeasible(Infeasibility::Numerical { detail }, trajectory, phases);
            }
        };
        tracker = next_tracker;
        if phases.last() != Some(&out.phase) {
            phases.push(out.phase);
        }
        if n.is_multiple_of(config.sample_every) {
            trajectory.push(PathSample {
                t: state.t,
                north: state.north,
                east: state.east,
                alt: state.alt,
                phase: out.phase,
            });
        }
        n += 1;

        let (phi, gamma) = attitude_response(&state, &out.command, params, envelope, config.dt);
        let held = AttitudeCommand {
            roll_cmd: phi,
            pitch_cmd: gamma - params.gamma_opt,
        };
        let mut lagged = state;
        lagged.phi = phi;
        lagged.gamma = gamma;
        let outcome = match step(&lagged, &held, &WindSample::CALM, params, config.dt, site.elevation)
        {
            Ok(o) => o,
            Err(e) => {
                let detail = e.to_string();
                return infeasible(Infeasibility::Numerical { detail }, trajectory, phases);
            }
        };
        let mut next = *outcome.state();
        // Rates follow the reduced attitude update rather than the held step.
        next.p = (phi - state.phi) / config.dt;
        next.q = (gamma - state.gamma) / config.dt;
        if let Some(v) = check_envelope(&next, envelope).first() {
            let reason = Infeasibility::EnvelopeViolation {
                t: next.t,
                variable: v.variable,
            };
            return infeasible(reason, trajectory, phases);
        }
        state = next;

        if let StepOutcome::Touchdown(_) = outcome {
            if phases.last() != Some(&GuidancePhase::Terminal) {
                phases.push(GuidancePhase::Terminal);
            }
            trajectory.push(PathSample {
                t: state.t,
                north: state.north,
                east: state.east,
                alt: state.alt,
                phase: GuidancePhase::Terminal,
            });
            let verdict = classify_touchdown(&state, site, config);
            let landing_time = verdict.is_feasible().then_some(state.t - init.t);
            return Prediction {
                verdict,
                landing_time,
                touchdown: Some(state),
                trajectory,
                phases,
            };
        }
    }
}

/// Closed-loop prediction with the still-air reachability pre-screen: a site
/// farther than the wings-level glide range is rejected without simulating.
pub fn predict_trajectory(
    init: &AircraftState,
    plan: &MissionPlan,
    ctx: &PredictionContext<'_>,
) -> Prediction {
    let site = &plan.site;
    let distance = (init.position() - site.position()).norm();
    let reach = glide_range(init.alt - site.elevation, ctx.params);
    if distance > reach {
        return Prediction {
            verdict: Verdict::Infeasible(Infeasibility::GroundShortfall {
                miss_distance: distance - reach.max(0.0),
            }),
            landing_time: None,
            touchdown: None,
            trajectory: Vec::new(),
            phases: Vec::new(),
        };
    }
    simulate_landing(init, plan, ctx)
}

/// Predicts every site (in parallel) and selects the feasible one with the
/// shortest landing time, ties going to the lower id.
pub fn evaluate_sites(
    init: &AircraftState,
    plans: &[MissionPlan],
    ctx: &PredictionContext<'_>,
) -> Result<FeasibilityReport, PlanError> {
    if plans.is_empty() {
        return Err(PlanError::NoSites);
    }
    ctx.config.validate()?;
    for (i, p) in plans.iter().enumerate() {
        if plans[..i].iter().any(|q| q.site.id == p.site.id) {
            return Err(PlanError::DuplicateSite(p.site.id));
        }
    }
    let sites: Vec<SiteAssessment> = plans
        .par_iter()
        .map(|plan| {
            let started = Instant::now();
            let prediction = predict_trajectory(init, plan, ctx);
            SiteAssessment {
                site_id: plan.site.id,
                verdict: prediction.verdict,
                predicted_landing_time: prediction.landing_time,
                predicted_trajectory: prediction.trajectory,
                compute_time: started.elapsed().as_secs_f64(),
            }
        })
        .collect();
    let selected = sites
        .iter()
        .filter_map(|s| s.predicted_landing_time.map(|t| (t, s.site_id)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id);
    let report = FeasibilityReport { sites, selected };
    match report.selected {
        Some(_) => Ok(report),
        None => Err(PlanError::NoFeasibleSite(Box::new(report))),
    }
}
