//! Scenario files (TOML): loading, validation and the shipped presets.
//!
//! Angles are given in degrees in the file and converted to radians on load;
//! everything else is SI. Unknown keys are rejected.

use nalgebra::{DMatrix, Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angle::wrap_pi;
use crate::autopilot::AutopilotConfig;
use crate::control::ControlGains;
use crate::dynamics::{AircraftState, GliderParams, STANDARD_GRAVITY};
use crate::guidance::{LandingSite, MissionDefaults, MissionPlan, Point};
use crate::harness::{RunSetup, SimConfig};
use crate::models::default_model_set;
use crate::monitor::{EnvelopeLimits, FaultModel, ModelId, Thresholds};
use crate::planner::PredictionConfig;
use crate::weather::WeatherConfig;

/// Keys every scenario must provide.
pub const REQUIRED_KEYS: [&str; 2] = ["initial", "sites"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    #[default]
    InProcess,
    Sitl,
}

/// One engine-out initial condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialFile {
    pub north: f64,
    pub east: f64,
    pub height: f64,
    pub heading_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GliderFile {
    pub v_opt: f64,
    pub glide_ratio: f64,
    pub v_stall: f64,
    pub tau_phi: f64,
    pub tau_gamma: f64,
    pub gamma_min_deg: f64,
    pub g: f64,
}

impl Default for GliderFile {
    fn default() -> Self {
        Self {
            v_opt: 35.0,
            glide_ratio: 9.0,
            v_stall: 30.0,
            tau_phi: 0.5,
            tau_gamma: 0.5,
            gamma_min_deg: -30.0,
            g: STANDARD_GRAVITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvelopeFile {
    pub v_min: f64,
    pub v_max: f64,
    pub theta_min_deg: f64,
    pub theta_max_deg: f64,
    pub phi_min_deg: f64,
    pub phi_max_deg: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for EnvelopeFile {
    fn default() -> Self {
        let e = EnvelopeLimits::default();
        let deg = f64::to_degrees;
        Self {
            v_min: e.v_min,
            v_max: e.v_max,
            theta_min_deg: deg(e.theta_min),
            theta_max_deg: deg(e.theta_max),
            phi_min_deg: deg(e.phi_min),
            phi_max_deg: deg(e.phi_max),
            p_min: e.p_min,
            p_max: e.p_max,
            q_min: e.q_min,
            q_max: e.q_max,
            r_min: e.r_min,
            r_max: e.r_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub id: ModelId,
    pub name: String,
    /// Row-major matrices.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub uncertainty_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteFile {
    pub id: u32,
    pub north: f64,
    pub east: f64,
    pub elevation: f64,
    pub runway_heading_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainsFile {
    /// Row-major 2x2 gain on (heading error, flight-path-angle error).
    pub f_z: [[f64; 2]; 2],
    pub alpha: f64,
    /// Roll and pitch saturation bounds.
    pub r_max_deg: [f64; 2],
    pub gamma_ki: f64,
}

impl Default for GainsFile {
    fn default() -> Self {
        let g = ControlGains::default();
        Self {
            f_z: [[g.f_z[(0, 0)], g.f_z[(0, 1)]], [g.f_z[(1, 0)], g.f_z[(1, 1)]]],
            alpha: g.alpha,
            r_max_deg: [g.r_max[0].to_degrees(), g.r_max[1].to_degrees()],
            gamma_ki: g.gamma_ki,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictionFile {
    pub dt: f64,
    pub t_max: f64,
    pub land_radius: f64,
    pub heading_tolerance_deg: f64,
    pub sample_every: usize,
}

impl Default for PredictionFile {
    fn default() -> Self {
        let p = PredictionConfig::default();
        Self {
            dt: p.dt,
            t_max: p.t_max,
            land_radius: p.land_radius,
            heading_tolerance_deg: p.heading_tolerance.to_degrees(),
            sample_every: p.sample_every,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimFile {
    pub dt_plant: f64,
    pub t_max: f64,
    pub engine_failure_time: f64,
    pub engine_rpm: f64,
    /// Seconds of safe hold between detection and plan engagement.
    pub plan_delay: f64,
}

impl Default for SimFile {
    fn default() -> Self {
        let s = SimConfig::default();
        Self {
            dt_plant: s.dt_plant,
            t_max: s.t_max,
            engine_failure_time: s.engine_failure_time,
            engine_rpm: s.engine_rpm,
            plan_delay: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SitlFile {
    pub rate_hz: f64,
    pub host: String,
    pub plant_to_autopilot_port: u16,
    pub autopilot_to_plant_port: u16,
    /// Hold each plant step to its wall-clock period.
    pub pace: bool,
}

impl Default for SitlFile {
    fn default() -> Self {
        Self {
            rate_hz: 100.0,
            host: "127.0.0.1".to_string(),
            plant_to_autopilot_port: crate::sitl::transport::PLANT_TO_AUTOPILOT_PORT,
            autopilot_to_plant_port: crate::sitl::transport::AUTOPILOT_TO_PLANT_PORT,
            pace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerrainFile {
    /// Touchdown elevation of the plant; defaults to the first site's.
    pub elevation: Option<f64>,
}

/// On-disk scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Overrides the weather seed when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub mode: RunMode,
    pub initial: Vec<InitialFile>,
    #[serde(default)]
    pub glider: GliderFile,
    #[serde(default)]
    pub envelope: EnvelopeFile,
    #[serde(default)]
    pub monitor: Thresholds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub models: Option<Vec<ModelFile>>,
    #[serde(default)]
    pub weather: WeatherConfig,
    pub sites: Vec<SiteFile>,
    #[serde(default)]
    pub mission: MissionDefaults,
    #[serde(default)]
    pub gains: GainsFile,
    #[serde(default)]
    pub prediction: PredictionFile,
    #[serde(default)]
    pub sim: SimFile,
    #[serde(default)]
    pub sitl: SitlFile,
    #[serde(default)]
    pub terrain: TerrainFile,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("missing required keys: {}", .0.join(", "))]
    Missing(Vec<&'static str>),
    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("invalid value at `{path}`: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl ToString) -> ScenarioError {
    ScenarioError::Invalid {
        path: path.into(),
        message: message.to_string(),
    }
}

/// Validated scenario, ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub mode: RunMode,
    pub initial: Vec<AircraftState>,
    pub autopilot: AutopilotConfig,
    pub models: Vec<FaultModel>,
    pub weather: WeatherConfig,
    pub ground: f64,
    pub sim: SimConfig,
    pub sitl: SitlFile,
}

fn matrix(rows: &[Vec<f64>], path: &str) -> Result<DMatrix<f64>, ScenarioError> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(invalid(path, "matrix rows must be non-empty and of equal length"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(invalid(path, "matrix entries must be finite"));
    }
    Ok(DMatrix::from_row_iterator(n, m, rows.iter().flatten().copied()))
}

fn finite(path: &str, values: &[f64]) -> Result<(), ScenarioError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(invalid(path, "values must be finite"))
    }
}

impl ScenarioFile {
    /// Converts and validates every block.
    pub fn validate(&self) -> Result<Scenario, ScenarioError> {
        let g = &self.glider;
        if !(g.glide_ratio > 0.0 && g.glide_ratio.is_finite()) {
            return Err(invalid("glider.glide_ratio", "must be positive"));
        }
        let params = GliderParams {
            v_stall: g.v_stall,
            tau_phi: g.tau_phi,
            tau_gamma: g.tau_gamma,
            gamma_min: g.gamma_min_deg.to_radians(),
            g: g.g,
            ..GliderParams::from_glide_ratio(g.v_opt, g.glide_ratio)
        };
        params.validate().map_err(|e| invalid("glider", e))?;
        if !(params.g > 0.0) {
            return Err(invalid("glider.g", "must be positive"));
        }

        let e = &self.envelope;
        let rad = f64::to_radians;
        let envelope = EnvelopeLimits {
            v_min: e.v_min,
            v_max: e.v_max,
            theta_min: rad(e.theta_min_deg),
            theta_max: rad(e.theta_max_deg),
            phi_min: rad(e.phi_min_deg),
            phi_max: rad(e.phi_max_deg),
            p_min: e.p_min,
            p_max: e.p_max,
            q_min: e.q_min,
            q_max: e.q_max,
            r_min: e.r_min,
            r_max: e.r_max,
        };
        envelope.validate(&params).map_err(|err| invalid("envelope", err))?;

        let gains = ControlGains {
            f_z: Matrix2::new(
                self.gains.f_z[0][0],
                self.gains.f_z[0][1],
                self.gains.f_z[1][0],
                self.gains.f_z[1][1],
            ),
            alpha: self.gains.alpha,
            r_max: Vector2::new(rad(self.gains.r_max_deg[0]), rad(self.gains.r_max_deg[1])),
            gamma_ki: self.gains.gamma_ki,
        };
        gains.validate().map_err(|err| invalid("gains", err))?;

        let mut weather = self.weather;
        if let Some(seed) = self.seed {
            weather.seed = seed;
        }
        weather.validate().map_err(|err| invalid("weather", err))?;

        if self.initial.is_empty() {
            return Err(invalid("initial", "at least one initial state is required"));
        }
        let mut initial = Vec::with_capacity(self.initial.len());
        for (i, s) in self.initial.iter().enumerate() {
            finite(&format!("initial[{i}]"), &[s.north, s.east, s.height, s.heading_deg])?;
            initial.push(AircraftState::level(
                s.north,
                s.east,
                s.height,
                wrap_pi(s.heading_deg.to_radians()),
                params.v_opt,
                self.sim.engine_rpm,
            ));
        }

        if self.sites.is_empty() {
            return Err(invalid("sites", "at least one landing site is required"));
        }
        let mut sites = Vec::with_capacity(self.sites.len());
        for (i, s) in self.sites.iter().enumerate() {
            let path = format!("sites[{i}]");
            finite(&path, &[s.north, s.east, s.elevation, s.runway_heading_deg])?;
            if sites.iter().any(|o: &LandingSite| o.id == s.id) {
                return Err(invalid(format!("{path}.id"), format!("duplicate site id {}", s.id)));
            }
            sites.push(LandingSite {
                id: s.id,
                north: s.north,
                east: s.east,
                elevation: s.elevation,
                runway_heading: wrap_pi(s.runway_heading_deg.to_radians()),
            });
        }
        let m = &self.mission;
        finite(
            "mission",
            &[
                m.loiter_radius,
                m.loiter_offset,
                m.cutoff_height,
                m.approach_trigger_factor,
                m.lookahead,
                m.loiter_lead,
            ],
        )?;
        if !(m.approach_trigger_factor > 0.0) {
            return Err(invalid("mission.approach_trigger_factor", "must be positive"));
        }
        MissionPlan::for_site(sites[0], Point::zeros(), m)
            .validate()
            .map_err(|err| invalid("mission", err))?;

        let p = &self.prediction;
        let prediction = PredictionConfig {
            dt: p.dt,
            t_max: p.t_max,
            land_radius: p.land_radius,
            heading_tolerance: p.heading_tolerance_deg.to_radians(),
            sample_every: p.sample_every,
        };
        prediction.validate().map_err(|err| invalid("prediction", err))?;

        let s = &self.sim;
        if !(s.dt_plant > 0.0 && s.dt_plant <= crate::dynamics::MAX_STEP) {
            return Err(invalid("sim.dt_plant", "must lie in (0, 0.1]"));
        }
        finite("sim", &[s.t_max, s.engine_failure_time, s.engine_rpm, s.plan_delay])?;
        if !(s.t_max > 0.0) || s.plan_delay < 0.0 {
            return Err(invalid("sim", "t_max must be positive and plan_delay non-negative"));
        }
        let sim = SimConfig {
            dt_plant: s.dt_plant,
            t_max: s.t_max,
            engine_failure_time: s.engine_failure_time,
            engine_rpm: s.engine_rpm,
        };
        if !(self.sitl.rate_hz > 0.0 && self.sitl.rate_hz.is_finite()) {
            return Err(invalid("sitl.rate_hz", "must be positive"));
        }

        let models = match &self.models {
            None => default_model_set(&params),
            Some(list) => {
                let mut out = Vec::with_capacity(list.len());
                for (i, mf) in list.iter().enumerate() {
                    let path = format!("models[{i}]");
                    let model = FaultModel {
                        id: mf.id,
                        name: mf.name.clone(),
                        a: matrix(&mf.a, &format!("{path}.a"))?,
                        b: matrix(&mf.b, &format!("{path}.b"))?,
                        c: matrix(&mf.c, &format!("{path}.c"))?,
                        uncertainty_bound: mf.uncertainty_bound,
                        envelope,
                        glider: params,
                    };
                    model.validate().map_err(|err| invalid(&path, err))?;
                    out.push(model);
                }
                out
            }
        };
        if !models.iter().any(|m| m.id == self.monitor.engine_out_model) {
            return Err(invalid(
                "monitor.engine_out_model",
                format!("no model with id {}", self.monitor.engine_out_model),
            ));
        }

        let ground = self.terrain.elevation.unwrap_or(sites[0].elevation);
        finite("terrain.elevation", &[ground])?;

        Ok(Scenario {
            name: self.name.clone().unwrap_or_else(|| "scenario".to_string()),
            mode: self.mode,
            initial,
            autopilot: AutopilotConfig {
                params,
                gains,
                envelope,
                thresholds: self.monitor,
                sites,
                mission: *m,
                prediction,
                plan_delay: s.plan_delay,
            },
            models,
            weather,
            ground,
            sim,
            sitl: self.sitl.clone(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario files serialize")
    }
}

/// Parses and validates a TOML scenario document.
pub fn load_scenario(document: &str) -> Result<Scenario, ScenarioError> {
    parse_scenario_file(document)?.validate()
}

/// Parses a TOML document into the file representation without validation.
pub fn parse_scenario_file(document: &str) -> Result<ScenarioFile, ScenarioError> {
    let table: toml::Table = document.parse().map_err(|e: toml::de::Error| ScenarioError::Parse {
        path: String::new(),
        message: e.message().to_string(),
    })?;
    let missing: Vec<&'static str> = REQUIRED_KEYS
        .iter()
        .copied()
        .filter(|k| !table.contains_key(*k))
        .collect();
    if !missing.is_empty() {
        return Err(ScenarioError::Missing(missing));
    }
    serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| ScenarioError::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

impl Scenario {
    /// Run inputs for initial condition `trial` (zero-based).
    pub fn run_setup(&self, trial: usize) -> Option<RunSetup> {
        Some(RunSetup {
            init: *self.initial.get(trial)?,
            autopilot: self.autopilot.clone(),
            weather: self.weather,
            ground: self.ground,
            sim: self.sim,
        })
    }

    /// Mission plans for every site, starting from `origin`.
    pub fn plans(&self, origin: &AircraftState) -> Vec<MissionPlan> {
        self.autopilot
            .sites
            .iter()
            .map(|s| MissionPlan::for_site(*s, origin.position(), &self.autopilot.mission))
            .collect()
    }
}

/// Initial conditions of the five clear-weather trials.
pub const TABLE1_INITIAL: [InitialFile; 5] = [
    InitialFile { north: 13163.0, east: -7164.9, height: 3000.0, heading_deg: 78.5 },
    InitialFile { north: 13353.0, east: -14380.0, height: 4000.0, heading_deg: 110.3 },
    InitialFile { north: 23429.0, east: -6675.6, height: 5000.0, heading_deg: 85.6 },
    InitialFile { north: 20719.0, east: -11652.0, height: 3000.0, heading_deg: 256.74 },
    InitialFile { north: 21323.0, east: -11021.0, height: 2000.0, heading_deg: 69.594 },
];

/// Landing site of the clear- and severe-weather trials.
pub const TRIAL_SITE: SiteFile = SiteFile {
    id: 1,
    north: 21822.0,
    east: -9751.8,
    elevation: 140.0,
    runway_heading_deg: 24.18,
};

/// Severe-weather rows: direction, speed (kts), turbulence (%), gust (kts), shear.
pub const TABLE2_WEATHER: [[f64; 5]; 5] = [
    [20.0, 14.0, 10.0, 10.0, 10.0],
    [0.0, 3.0, 8.0, 14.0, 8.0],
    [4.0, 5.0, 10.0, 8.0, 14.0],
    [14.0, 7.0, 12.0, 22.0, 8.0],
    [27.0, 12.0, 4.0, 9.0, 4.0],
];

/// Candidate sites of the site-selection scenario.
pub const TABLE3_SITES: [SiteFile; 4] = [
    SiteFile { id: 1, north: 21822.0, east: -9751.8, elevation: 235.0, runway_heading_deg: 24.17 },
    SiteFile { id: 2, north: 11822.0, east: -6751.8, elevation: 235.0, runway_heading_deg: 130.0 },
    SiteFile { id: 3, north: 46000.0, east: -39751.8, elevation: 235.0, runway_heading_deg: 40.0 },
    SiteFile { id: 4, north: 36000.0, east: -19751.8, elevation: 235.0, runway_heading_deg: 40.0 },
];

/// Low-altitude start short of the threshold, below the cut-off altitude.
pub const LOW_ALTITUDE_INITIAL: InitialFile = InitialFile {
    north: 20300.0,
    east: -10400.0,
    height: 500.0,
    heading_deg: 69.594,
};

fn base(name: String, initial: Vec<InitialFile>, sites: Vec<SiteFile>) -> ScenarioFile {
    ScenarioFile {
        name: Some(name),
        seed: None,
        mode: RunMode::InProcess,
        initial,
        glider: GliderFile::default(),
        envelope: EnvelopeFile::default(),
        monitor: Thresholds::default(),
        models: None,
        weather: WeatherConfig::default(),
        sites,
        mission: MissionDefaults::default(),
        gains: GainsFile::default(),
        prediction: PredictionFile::default(),
        sim: SimFile::default(),
        sitl: SitlFile::default(),
        terrain: TerrainFile::default(),
    }
}

/// Every shipped preset as `(name, document)`.
pub fn presets() -> Vec<(String, ScenarioFile)> {
    let mut out = Vec::new();
    for (i, init) in TABLE1_INITIAL.iter().enumerate() {
        let name = format!("table1_trial{}", i + 1);
        out.push((name.clone(), base(name, vec![*init], vec![TRIAL_SITE])));
    }
    for (i, row) in TABLE2_WEATHER.iter().enumerate() {
        let name = format!("table2_trial{}", i + 1);
        let mut f = base(name.clone(), vec![TABLE1_INITIAL[0]], vec![TRIAL_SITE]);
        f.weather = WeatherConfig {
            wind_dir_deg: row[0],
            wind_speed_kts: row[1],
            turbulence_pct: row[2],
            gust_increase_kts: row[3],
            wind_shear: row[4],
            seed: 1,
        };
        out.push((name, f));
    }
    out.push((
        "table3_sites".to_string(),
        base(
            "table3_sites".to_string(),
            vec![TABLE1_INITIAL[0]],
            TABLE3_SITES.to_vec(),
        ),
    ));
    out.push((
        "low_altitude_skip".to_string(),
        base(
            "low_altitude_skip".to_string(),
            vec![LOW_ALTITUDE_INITIAL],
            vec![TRIAL_SITE],
        ),
    ));
    out
}

/// A shipped preset by name.
pub fn preset(name: &str) -> Option<ScenarioFile> {
    presets().into_iter().find(|(n, _)| n == name).map(|(_, f)| f)
}
