//! Online run: plant with weather, autopilot in the loop, trajectory log and
//! run summary.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autopilot::{Autopilot, AutopilotConfig, AutopilotError, AutopilotOutput};
use crate::control::AttitudeCommand;
use crate::dynamics::{step, AircraftState, DynamicsError, GliderParams, StepOutcome};
use crate::guidance::{GuidancePhase, LandingSite};
use crate::monitor::{check_envelope, EnvelopeLimits};
use crate::planner::{classify_touchdown, PredictionConfig};
use crate::weather::{sample, WeatherConfig, WindSample, WindStream};

/// First line of every trajectory log.
pub const LOG_VERSION_LINE: &str = "# trajectory-log v1";
pub const LOG_COLUMNS: [&str; 15] = [
    "t", "north", "east", "alt", "V", "psi", "gamma", "phi", "phase", "psi_des", "gamma_des",
    "roll_cmd", "pitch_cmd", "w_n", "w_e",
];

/// Plant-side run settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt_plant: f64,
    /// Abort after this many seconds of simulated time.
    pub t_max: f64,
    pub engine_failure_time: f64,
    pub engine_rpm: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_plant: 0.01,
            t_max: 1800.0,
            engine_failure_time: 0.0,
            engine_rpm: 2400.0,
        }
    }
}

/// Everything one online run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSetup {
    pub init: AircraftState,
    pub autopilot: AutopilotConfig,
    pub weather: WeatherConfig,
    /// Terrain elevation where the plant touches down.
    pub ground: f64,
    pub sim: SimConfig,
}

/// One log row per plant step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub north: f64,
    pub east: f64,
    pub alt: f64,
    pub airspeed: f64,
    pub psi: f64,
    pub gamma: f64,
    pub phi: f64,
    pub phase: GuidancePhase,
    pub psi_des: Option<f64>,
    pub gamma_des: Option<f64>,
    pub roll_cmd: f64,
    pub pitch_cmd: f64,
    pub w_n: f64,
    pub w_e: f64,
}

impl LogRow {
    pub fn new(
        state: &AircraftState,
        phase: GuidancePhase,
        desired: Option<(f64, f64)>,
        cmd: &AttitudeCommand,
        wind: &WindSample,
    ) -> Self {
        Self {
            t: state.t,
            north: state.north,
            east: state.east,
            alt: state.alt,
            airspeed: state.airspeed,
            psi: state.psi,
            gamma: state.gamma,
            phi: state.phi,
            phase,
            psi_des: desired.map(|d| d.0),
            gamma_des: desired.map(|d| d.1),
            roll_cmd: cmd.roll_cmd,
            pitch_cmd: cmd.pitch_cmd,
            w_n: wind.w_n,
            w_e: wind.w_e,
        }
    }
}

/// Writes the versioned CSV log.
pub fn write_log<W: Write>(rows: &[LogRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{LOG_VERSION_LINE}")?;
    writeln!(out, "{}", LOG_COLUMNS.join(","))?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{:.3},{:.4},{:.4},{:.4},{:.4},{:.6},{:.6},{:.6},{},{},{},{:.6},{:.6},{:.4},{:.4}",
            r.t,
            r.north,
            r.east,
            r.alt,
            r.airspeed,
            r.psi,
            r.gamma,
            r.phi,
            r.phase.name(),
            opt(r.psi_des),
            opt(r.gamma_des),
            r.roll_cmd,
            r.pitch_cmd,
            r.w_n,
            r.w_e,
        )?;
    }
    out.flush()
}

/// Running statistics kept by the plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantStats {
    pub min_airspeed: f64,
    /// Smallest normalized distance to any envelope bound.
    pub min_envelope_margin: f64,
    /// Steps on which at least one envelope bound was crossed.
    pub envelope_violations: usize,
}

impl Default for PlantStats {
    fn default() -> Self {
        Self {
            min_airspeed: f64::INFINITY,
            min_envelope_margin: f64::INFINITY,
            envelope_violations: 0,
        }
    }
}

/// Truth-side simulation: point-mass plant, weather and the engine.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub state: AircraftState,
    pub params: GliderParams,
    pub envelope: EnvelopeLimits,
    pub weather: WeatherConfig,
    pub stream: WindStream,
    pub ground: f64,
    pub sim: SimConfig,
    pub stats: PlantStats,
    pub touchdown: Option<AircraftState>,
}

impl Plant {
    pub fn new(
        init: AircraftState,
        params: GliderParams,
        envelope: EnvelopeLimits,
        weather: WeatherConfig,
        ground: f64,
        sim: SimConfig,
    ) -> Self {
        let mut state = init;
        state.airspeed = params.v_opt;
        state.rpm = engine_rpm(&sim, state.t);
        let mut stats = PlantStats::default();
        observe(&mut stats, &state, &envelope);
        Self {
            state,
            params,
            envelope,
            stream: WindStream::new(weather.seed),
            weather,
            ground,
            sim,
            stats,
            touchdown: None,
        }
    }

    /// Wind at the current state. Does not advance the plant.
    pub fn wind(&self) -> WindSample {
        sample(&self.weather, self.state.alt, self.state.t, self.stream.clone()).0
    }

    /// Integrates one plant step with `cmd` held. Returns the wind that acted
    /// over the step.
    pub fn advance(&mut self, cmd: &AttitudeCommand) -> Result<WindSample, DynamicsError> {
        let (wind, stream) = sample(&self.weather, self.state.alt, self.state.t, self.stream.clone());
        self.stream = stream;
        let outcome = step(&self.state, cmd, &wind, &self.params, self.sim.dt_plant, self.ground)?;
        let mut next = *outcome.state();
        next.rpm = engine_rpm(&self.sim, next.t);
        observe(&mut self.stats, &next, &self.envelope);
        self.state = next;
        if let StepOutcome::Touchdown(_) = outcome {
            self.touchdown = Some(next);
        }
        Ok(wind)
    }

    pub fn landed(&self) -> bool {
        self.touchdown.is_some()
    }
}

fn engine_rpm(sim: &SimConfig, t: f64) -> f64 {
    if t < sim.engine_failure_time {
        sim.engine_rpm
    } else {
        0.0
    }
}

fn observe(stats: &mut PlantStats, state: &AircraftState, envelope: &EnvelopeLimits) {
    stats.min_airspeed = stats.min_airspeed.min(state.airspeed);
    stats.min_envelope_margin = stats.min_envelope_margin.min(envelope.normalized_margin(state));
    if !check_envelope(state, envelope).is_empty() {
        stats.envelope_violations += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TouchdownReport {
    pub t: f64,
    pub north: f64,
    pub east: f64,
    pub psi: f64,
    /// Horizontal distance to the selected site, m.
    pub miss_distance: f64,
    /// Absolute heading error to the runway, rad.
    pub heading_error: f64,
    /// Inside the touchdown radius and heading tolerance.
    pub on_site: bool,
}

/// Summary emitted after a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub selected_site: Option<u32>,
    pub detected_at: Option<f64>,
    /// Predicted seconds from detection to touchdown for the selected site.
    pub predicted_landing_time: Option<f64>,
    /// Seconds from engine failure to touchdown.
    pub landing_time: Option<f64>,
    pub touchdown: Option<TouchdownReport>,
    pub min_airspeed: f64,
    pub min_envelope_margin: f64,
    pub envelope_violations: usize,
    /// Distinct guidance phases in order of appearance.
    pub phases: Vec<GuidancePhase>,
}

impl RunSummary {
    /// Touched down on the selected site with no envelope violation.
    pub fn success(&self) -> bool {
        self.touchdown.as_ref().is_some_and(|t| t.on_site) && self.envelope_violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error(transparent)]
    Autopilot(#[from] AutopilotError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("no touchdown within {0} s")]
    Timeout(f64),
}

/// Phase list accumulator.
pub fn record_phase(phases: &mut Vec<GuidancePhase>, phase: GuidancePhase) {
    if phases.last() != Some(&phase) {
        phases.push(phase);
    }
}

pub fn touchdown_report(
    touchdown: &AircraftState,
    site: &LandingSite,
    prediction: &PredictionConfig,
) -> TouchdownReport {
    let miss_distance = (touchdown.position() - site.position()).norm();
    let heading_error = crate::angle::wrap_pi(touchdown.psi - site.runway_heading).abs();
    TouchdownReport {
        t: touchdown.t,
        north: touchdown.north,
        east: touchdown.east,
        psi: touchdown.psi,
        miss_distance,
        heading_error,
        on_site: classify_touchdown(touchdown, site, prediction).is_feasible(),
    }
}

/// Assembles the summary once the plant has stopped.
pub fn summarize(plant: &Plant, autopilot: &Autopilot, phases: Vec<GuidancePhase>) -> RunSummary {
    let engaged = autopilot.engaged.as_ref();
    let touchdown = match (plant.touchdown.as_ref(), engaged) {
        (Some(td), Some(e)) => Some(touchdown_report(td, &e.plan.site, &autopilot.config.prediction)),
        (Some(td), None) => Some(TouchdownReport {
            t: td.t,
            north: td.north,
            east: td.east,
            psi: td.psi,
            miss_distance: f64::INFINITY,
            heading_error: f64::NAN,
            on_site: false,
        }),
        _ => None,
    };
    RunSummary {
        seed: plant.weather.seed,
        selected_site: engaged.map(|e| e.plan.site.id),
        detected_at: autopilot.monitor.verdict.detected_at,
        predicted_landing_time: engaged.map(|e| e.predicted_landing_time),
        landing_time: plant
            .touchdown
            .map(|td| td.t - plant.sim.engine_failure_time),
        touchdown,
        min_airspeed: plant.stats.min_airspeed,
        min_envelope_margin: plant.stats.min_envelope_margin,
        envelope_violations: plant.stats.envelope_violations,
        phases,
    }
}

/// Summary for a plant without access to the autopilot: touchdown is scored
/// against the nearest candidate site.
pub fn plant_summary(
    plant: &Plant,
    phases: Vec<GuidancePhase>,
    sites: &[LandingSite],
    prediction: &PredictionConfig,
) -> RunSummary {
    let touchdown = plant.touchdown.as_ref().and_then(|td| {
        sites
            .iter()
            .map(|s| touchdown_report(td, s, prediction))
            .min_by(|a, b| a.miss_distance.total_cmp(&b.miss_distance))
    });
    RunSummary {
        seed: plant.weather.seed,
        selected_site: None,
        detected_at: None,
        predicted_landing_time: None,
        landing_time: plant
            .touchdown
            .map(|td| td.t - plant.sim.engine_failure_time),
        touchdown,
        min_airspeed: plant.stats.min_airspeed,
        min_envelope_margin: plant.stats.min_envelope_margin,
        envelope_violations: plant.stats.envelope_violations,
        phases,
    }
}

pub fn log_row(state: &AircraftState, out: &AutopilotOutput, wind: &WindSample) -> LogRow {
    LogRow::new(
        state,
        out.phase,
        out.target.map(|t| (t.psi, t.gamma)),
        &out.command,
        wind,
    )
}

/// Runs plant and autopilot in one loop, one control step per plant step.
pub fn run_in_process(setup: &RunSetup) -> Result<(Vec<LogRow>, RunSummary), RunError> {
    let mut plant = Plant::new(
        setup.init,
        setup.autopilot.params,
        setup.autopilot.envelope,
        setup.weather,
        setup.ground,
        setup.sim,
    );
    let mut autopilot = Autopilot::new(setup.autopilot.clone());
    let mut rows = Vec::new();
    let mut phases = Vec::new();
    let t_end = setup.init.t + setup.sim.t_max;
    while !plant.landed() {
        if plant.state.t > t_end {
            return Err(RunError::Timeout(setup.sim.t_max));
        }
        let out = autopilot.step(&plant.state, setup.sim.dt_plant)?;
        record_phase(&mut phases, out.phase);
        let before = plant.state;
        let wind = plant.advance(&out.command)?;
        rows.push(log_row(&before, &out, &wind));
    }
    record_phase(&mut phases, GuidancePhase::Terminal);
    let summary = summarize(&plant, &autopilot, phases);
    Ok((rows, summary))
}
