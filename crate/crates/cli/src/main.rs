//! `deadstick`: run engine-out landing scenarios in process or over the
//! datagram bridge, evaluate landing sites, and export the shipped presets.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use deadstick::autopilot::{Autopilot, AutopilotError};
use deadstick::guidance::GuidancePhase;
use deadstick::harness::{
    plant_summary, record_phase, run_in_process, write_log, LogRow, Plant, RunError, RunSetup,
    RunSummary,
};
use deadstick::planner::{evaluate_sites, PlanError, PredictionContext};
use deadstick::scenario::{
    parse_scenario_file, preset, presets, RunMode, Scenario, ScenarioError, ScenarioFile,
};
use deadstick::sitl::{
    run_autopilot, run_plant, run_threaded, AutopilotEndpoint, BridgeError, PlantEndpoint,
    PlantLoop, SitlAddrs,
};

#[derive(Debug, Parser)]
#[command(name = "deadstick", version, about = "Engine-out emergency landing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario end to end and write trajectory logs and summaries.
    Sim(RunArgs),
    /// Predict every candidate site from the initial state and report.
    Evaluate(RunArgs),
    /// Plant endpoint of a bridged run (UDP).
    Plant(RunArgs),
    /// Autopilot endpoint of a bridged run (UDP).
    Autopilot(RunArgs),
    /// List the shipped presets, print one, or write them all.
    Presets {
        /// Print this preset as TOML.
        #[arg(long)]
        name: Option<String>,
        /// Write every preset as `<name>.toml` into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    InProcess,
    Sitl,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    scenario: Option<PathBuf>,
    /// Shipped preset name instead of a file.
    #[arg(long)]
    preset: Option<String>,
    /// Weather seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    dt_plant: Option<f64>,
    #[arg(long)]
    dt_predict: Option<f64>,
    /// Run only this initial condition (1-based).
    #[arg(long)]
    trial: Option<usize>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("no feasible landing site")]
    NoFeasibleSite,
    #[error("{0}")]
    Crash(String),
    #[error("{0}")]
    Transport(String),
    #[error("writing output: {0}")]
    Output(#[from] io::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::NoFeasibleSite => 3,
            CliError::Crash(_) => 4,
            CliError::Transport(_) => 5,
            CliError::Output(_) => 1,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Autopilot(AutopilotError::NoFeasibleSite(_)) => CliError::NoFeasibleSite,
            RunError::Autopilot(AutopilotError::Plan(PlanError::NoFeasibleSite(_))) => {
                CliError::NoFeasibleSite
            }
            other => CliError::Crash(other.to_string()),
        }
    }
}

impl From<BridgeError> for CliError {
    fn from(e: BridgeError) -> Self {
        match e {
            BridgeError::Run(r) => r.into(),
            other => CliError::Transport(other.to_string()),
        }
    }
}

fn load(args: &RunArgs) -> Result<Scenario, CliError> {
    let mut file: ScenarioFile = match (&args.scenario, &args.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            parse_scenario_file(&text)?
        }
        (None, Some(name)) => {
            preset(name).ok_or_else(|| CliError::Validation(format!("unknown preset `{name}`")))?
        }
        (None, None) => return Err(CliError::Validation("no scenario given".into())),
    };
    if let Some(seed) = args.seed {
        file.seed = Some(seed);
    }
    if let Some(dt) = args.dt_plant {
        file.sim.dt_plant = dt;
    }
    if let Some(dt) = args.dt_predict {
        file.prediction.dt = dt;
    }
    match args.mode {
        Some(ModeArg::InProcess) => file.mode = RunMode::InProcess,
        Some(ModeArg::Sitl) => file.mode = RunMode::Sitl,
        None => {}
    }
    Ok(file.validate()?)
}

/// Zero-based trial indices selected by `--trial`.
fn trials(args: &RunArgs, scenario: &Scenario) -> Result<Vec<usize>, CliError> {
    let n = scenario.initial.len();
    match args.trial {
        None => Ok((0..n).collect()),
        Some(k) if (1..=n).contains(&k) => Ok(vec![k - 1]),
        Some(k) => Err(CliError::Validation(format!(
            "--trial {k} out of range (scenario has {n} initial states)"
        ))),
    }
}

fn setup(scenario: &Scenario, trial: usize) -> RunSetup {
    scenario.run_setup(trial).expect("trial index checked")
}

fn addrs(scenario: &Scenario) -> Result<SitlAddrs, CliError> {
    let env_set = [
        deadstick::sitl::transport::ENV_HOST,
        deadstick::sitl::transport::ENV_PLANT_PORT,
        deadstick::sitl::transport::ENV_AUTOPILOT_PORT,
    ]
    .iter()
    .any(|k| std::env::var_os(k).is_some());
    let a = if env_set {
        SitlAddrs::from_env()
    } else {
        SitlAddrs::new(
            &scenario.sitl.host,
            scenario.sitl.plant_to_autopilot_port,
            scenario.sitl.autopilot_to_plant_port,
        )
    };
    a.map_err(|e| CliError::Transport(e.to_string()))
}

fn plant_loop(scenario: &Scenario) -> PlantLoop {
    PlantLoop {
        pace: scenario.sitl.pace,
        ..PlantLoop::new(scenario.sitl.rate_hz)
    }
}

const AUTOPILOT_IDLE: Duration = Duration::from_secs(30);

fn write_outputs(
    out: Option<&Path>,
    stem: &str,
    log: &[LogRow],
    summary: &RunSummary,
) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(summary).expect("summaries serialize");
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let mut f = io::BufWriter::new(fs::File::create(dir.join(format!("{stem}.csv")))?);
            write_log(log, &mut f)?;
            f.flush()?;
            fs::write(dir.join(format!("{stem}.summary.json")), json + "\n")?;
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn check_landing(summary: &RunSummary) -> Result<(), CliError> {
    match &summary.touchdown {
        Some(td) if td.on_site && summary.envelope_violations == 0 => Ok(()),
        Some(td) => Err(CliError::Crash(format!(
            "touchdown {:.1} m from the site, heading error {:.1} deg, {} envelope violations",
            td.miss_distance,
            td.heading_error.to_degrees(),
            summary.envelope_violations
        ))),
        None => Err(CliError::Crash("no touchdown".into())),
    }
}

fn sim(args: &RunArgs) -> Result<(), CliError> {
    let scenario = load(args)?;
    let mut first_failure = None;
    for k in trials(args, &scenario)? {
        let s = setup(&scenario, k);
        let (log, summary) = match scenario.mode {
            RunMode::InProcess => run_in_process(&s)?,
            RunMode::Sitl => {
                let a = addrs(&scenario)?;
                let tp = a.plant_transport().map_err(|e| CliError::Transport(e.to_string()))?;
                let ta = a
                    .autopilot_transport()
                    .map_err(|e| CliError::Transport(e.to_string()))?;
                let run = run_threaded(&s, tp, ta, &plant_loop(&scenario), AUTOPILOT_IDLE)?;
                (run.log, run.summary)
            }
        };
        write_outputs(
            args.out.as_deref(),
            &format!("trial{}", k + 1),
            &log,
            &summary,
        )?;
        if let Err(e) = check_landing(&summary) {
            eprintln!("trial {}: {e}", k + 1);
            first_failure.get_or_insert(e);
        }
    }
    first_failure.map_or(Ok(()), Err)
}

fn evaluate(args: &RunArgs) -> Result<(), CliError> {
    let scenario = load(args)?;
    let ap = &scenario.autopilot;
    let ctx = PredictionContext {
        params: &ap.params,
        gains: &ap.gains,
        envelope: &ap.envelope,
        config: &ap.prediction,
    };
    let mut none_feasible = false;
    for k in trials(args, &scenario)? {
        let init = scenario.initial[k];
        let report = match evaluate_sites(&init, &scenario.plans(&init), &ctx) {
            Ok(r) => r,
            Err(PlanError::NoFeasibleSite(r)) => {
                none_feasible = true;
                *r
            }
            Err(e) => return Err(CliError::Validation(e.to_string())),
        };
        let json = serde_json::to_string_pretty(&report).expect("reports serialize");
        match &args.out {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                fs::write(dir.join(format!("trial{}.feasibility.json", k + 1)), json + "\n")?;
            }
            None => println!("{json}"),
        }
    }
    if none_feasible {
        Err(CliError::NoFeasibleSite)
    } else {
        Ok(())
    }
}

fn single_trial(args: &RunArgs, scenario: &Scenario) -> Result<usize, CliError> {
    let ks = trials(args, scenario)?;
    match ks.as_slice() {
        [k] => Ok(*k),
        _ => Err(CliError::Validation(
            "bridged endpoints run one initial state; pass --trial".into(),
        )),
    }
}

fn plant(args: &RunArgs) -> Result<(), CliError> {
    let scenario = load(args)?;
    let k = single_trial(args, &scenario)?;
    let s = setup(&scenario, k);
    let mut transport = addrs(&scenario)?
        .plant_transport()
        .map_err(|e| CliError::Transport(e.to_string()))?;
    let mut ep = PlantEndpoint::new(Plant::new(
        s.init,
        s.autopilot.params,
        s.autopilot.envelope,
        s.weather,
        s.ground,
        s.sim,
    ));
    run_plant(&mut ep, &mut transport, &plant_loop(&scenario))?;
    let mut phases = ep.phases.clone();
    record_phase(&mut phases, GuidancePhase::Terminal);
    let summary = plant_summary(&ep.plant, phases, &s.autopilot.sites, &s.autopilot.prediction);
    write_outputs(args.out.as_deref(), &format!("trial{}", k + 1), &ep.log, &summary)?;
    check_landing(&summary)
}

fn autopilot(args: &RunArgs) -> Result<(), CliError> {
    let scenario = load(args)?;
    let k = single_trial(args, &scenario)?;
    let s = setup(&scenario, k);
    let mut transport = addrs(&scenario)?
        .autopilot_transport()
        .map_err(|e| CliError::Transport(e.to_string()))?;
    let mut ep = AutopilotEndpoint::new(Autopilot::new(s.autopilot.clone()), s.sim.dt_plant);
    run_autopilot(&mut ep, &mut transport, AUTOPILOT_IDLE)?;
    let engaged = ep.autopilot.engaged.as_ref();
    let report = serde_json::json!({
        "selected_site": engaged.map(|e| e.plan.site.id),
        "detected_at": ep.autopilot.monitor.verdict.detected_at,
        "predicted_landing_time": engaged.map(|e| e.predicted_landing_time),
        "frames_received": ep.stats.received,
        "frames_rejected": ep.stats.rejected,
        "commands_sent": ep.stats.sent,
    });
    let json = serde_json::to_string_pretty(&report).expect("json values serialize");
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(format!("trial{}.autopilot.json", k + 1)), json + "\n")?;
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn export_presets(name: Option<&str>, out: Option<&Path>) -> Result<(), CliError> {
    if let Some(name) = name {
        let file =
            preset(name).ok_or_else(|| CliError::Validation(format!("unknown preset `{name}`")))?;
        print!("{}", file.to_toml());
        return Ok(());
    }
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            for (n, file) in presets() {
                fs::write(dir.join(format!("{n}.toml")), file.to_toml())?;
            }
        }
        None => {
            for (n, _) in presets() {
                println!("{n}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sim(a) => sim(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Plant(a) => plant(a),
        Command::Autopilot(a) => autopilot(a),
        Command::Presets { name, out } => export_presets(name.as_deref(), out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
