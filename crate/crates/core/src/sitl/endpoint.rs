//! Plant and autopilot endpoints.
//!
//! Both are plain state machines fed with datagrams; the loops at the bottom
//! of this file move bytes between them and a [`Transport`].

use std::io;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::frame::{decode_frame, encode_frame, CommandPayload, FrameError, Message, SeqCounter};
use super::transport::Transport;
use crate::autopilot::{Autopilot, AutopilotError, AutopilotOutput};
use crate::control::AttitudeCommand;
use crate::dynamics::DynamicsError;
use crate::guidance::GuidancePhase;
use crate::harness::{record_phase, summarize, LogRow, Plant, RunError, RunSetup, RunSummary};
use crate::weather::{WeatherConfig, WindSample};

/// Sim-time silence after which the plant falls back to the safe command.
pub const PEER_TIMEOUT: f64 = 2.0;

/// Datagram counters for one endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LinkStats {
    pub sent: u64,
    pub received: u64,
    /// Datagrams that failed to decode.
    pub rejected: u64,
    /// Valid frames dropped because their seq was not newer.
    pub stale: u64,
    /// Times the plant switched to the safe command after peer silence.
    pub fallbacks: u64,
}

/// Plant side: owns the truth simulation, applies the newest command with a
/// zero-order hold.
#[derive(Debug, Clone)]
pub struct PlantEndpoint {
    pub plant: Plant,
    seq: SeqCounter,
    last_command_seq: Option<u32>,
    held: AttitudeCommand,
    held_phase: GuidancePhase,
    /// Time stamp of the state the held command answered.
    held_for: Option<f64>,
    last_peer_at: f64,
    in_fallback: bool,
    pub log: Vec<LogRow>,
    pub phases: Vec<GuidancePhase>,
    pub stats: LinkStats,
}

impl PlantEndpoint {
    pub fn new(plant: Plant) -> Self {
        let t0 = plant.state.t;
        Self {
            plant,
            seq: SeqCounter::default(),
            last_command_seq: None,
            held: AttitudeCommand::SAFE_HOLD,
            held_phase: GuidancePhase::Cruise,
            held_for: None,
            last_peer_at: t0,
            in_fallback: false,
            log: Vec::new(),
            phases: Vec::new(),
            stats: LinkStats::default(),
        }
    }

    fn encode(&mut self, message: Message) -> Vec<u8> {
        self.stats.sent += 1;
        let frame = self.seq.frame(message);
        encode_frame(&frame).expect("plant frames carry finite fields")
    }

    pub fn publish_state(&mut self) -> Vec<u8> {
        self.encode(Message::State(self.plant.state))
    }

    pub fn publish_weather(&mut self) -> Vec<u8> {
        self.encode(Message::Weather(self.plant.weather))
    }

    /// End-of-session marker.
    pub fn publish_heartbeat(&mut self) -> Vec<u8> {
        self.encode(Message::Heartbeat {
            t: self.plant.state.t,
        })
    }

    pub fn on_datagram(&mut self, bytes: &[u8]) {
        self.stats.received += 1;
        let frame = match decode_frame(bytes) {
            Ok(f) => f,
            Err(_) => {
                self.stats.rejected += 1;
                return;
            }
        };
        self.last_peer_at = self.plant.state.t;
        if let Message::Command(c) = frame.message {
            if self.last_command_seq.is_some_and(|last| frame.seq <= last) {
                self.stats.stale += 1;
                return;
            }
            self.last_command_seq = Some(frame.seq);
            self.held = AttitudeCommand {
                roll_cmd: c.roll_cmd,
                pitch_cmd: c.pitch_cmd,
            };
            self.held_phase = c.phase;
            self.held_for = Some(c.t);
            self.in_fallback = false;
        }
    }

    /// True once a command answering the current state has been applied.
    pub fn answered(&self) -> bool {
        self.held_for == Some(self.plant.state.t)
    }

    /// One plant step with the held command, or the safe command after
    /// [`PEER_TIMEOUT`] of silence.
    pub fn advance(&mut self) -> Result<WindSample, DynamicsError> {
        if self.plant.state.t - self.last_peer_at >= PEER_TIMEOUT - 1e-9 && !self.in_fallback {
            self.in_fallback = true;
            self.stats.fallbacks += 1;
            self.held = AttitudeCommand::SAFE_HOLD;
        }
        record_phase(&mut self.phases, self.held_phase);
        let before = self.plant.state;
        let wind = self.plant.advance(&self.held)?;
        self.log.push(LogRow::new(&before, self.held_phase, None, &self.held, &wind));
        Ok(wind)
    }

    pub fn held_command(&self) -> AttitudeCommand {
        self.held
    }
}

/// Autopilot side: answers every new State frame with a Command frame.
#[derive(Debug, Clone)]
pub struct AutopilotEndpoint {
    pub autopilot: Autopilot,
    seq: SeqCounter,
    last_state_seq: Option<u32>,
    last_t: Option<f64>,
    default_dt: f64,
    pub weather: Option<WeatherConfig>,
    pub finished: bool,
    pub last_output: Option<AutopilotOutput>,
    pub stats: LinkStats,
}

impl AutopilotEndpoint {
    /// `default_dt` is the control step assumed for the first state.
    pub fn new(autopilot: Autopilot, default_dt: f64) -> Self {
        Self {
            autopilot,
            seq: SeqCounter::default(),
            last_state_seq: None,
            last_t: None,
            default_dt,
            weather: None,
            finished: false,
            last_output: None,
            stats: LinkStats::default(),
        }
    }

    /// Handles one datagram; returns the reply to send, if any.
    pub fn on_datagram(&mut self, bytes: &[u8]) -> Result<Option<Vec<u8>>, BridgeError> {
        self.stats.received += 1;
        let frame = match decode_frame(bytes) {
            Ok(f) => f,
            Err(_) => {
                self.stats.rejected += 1;
                return Ok(None);
            }
        };
        match frame.message {
            Message::State(state) => {
                if self.last_state_seq.is_some_and(|last| frame.seq <= last) {
                    self.stats.stale += 1;
                    return Ok(None);
                }
                self.last_state_seq = Some(frame.seq);
                let dt = match self.last_t {
                    Some(t) if state.t > t => state.t - t,
                    _ => self.default_dt,
                };
                self.last_t = Some(state.t);
                let out = self.autopilot.step(&state, dt)?;
                self.last_output = Some(out);
                let reply = self.seq.frame(Message::Command(CommandPayload {
                    t: state.t,
                    roll_cmd: out.command.roll_cmd,
                    pitch_cmd: out.command.pitch_cmd,
                    phase: out.phase,
                }));
                self.stats.sent += 1;
                Ok(Some(encode_frame(&reply)?))
            }
            Message::Weather(w) => {
                self.weather = Some(w);
                Ok(None)
            }
            Message::Heartbeat { .. } => {
                self.finished = true;
                Ok(None)
            }
            Message::Command(_) => Ok(None),
        }
    }
}

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("transport: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("outgoing frame: {0}")]
    Frame(#[from] FrameError),
    #[error("no frame from the peer within {0:?}")]
    PeerSilent(Duration),
}

impl From<DynamicsError> for BridgeError {
    fn from(e: DynamicsError) -> Self {
        BridgeError::Run(RunError::Dynamics(e))
    }
}

impl From<AutopilotError> for BridgeError {
    fn from(e: AutopilotError) -> Self {
        BridgeError::Run(RunError::Autopilot(e))
    }
}

/// Output of a bridged run.
#[derive(Debug, Clone)]
pub struct SitlRun {
    pub log: Vec<LogRow>,
    pub summary: RunSummary,
    pub plant_link: LinkStats,
    pub autopilot_link: LinkStats,
}

/// Runs both endpoints in one thread, one state/command exchange per plant
/// step, dropping each datagram with probability `loss` (seeded).
pub fn run_lockstep(setup: &RunSetup, loss: f64, loss_seed: u64) -> Result<SitlRun, BridgeError> {
    let plant = Plant::new(
        setup.init,
        setup.autopilot.params,
        setup.autopilot.envelope,
        setup.weather,
        setup.ground,
        setup.sim,
    );
    let mut p = PlantEndpoint::new(plant);
    let mut a = AutopilotEndpoint::new(Autopilot::new(setup.autopilot.clone()), setup.sim.dt_plant);
    let mut rng = ChaCha8Rng::seed_from_u64(loss_seed);
    let mut delivered = move || rng.random::<f64>() >= loss;
    let t_end = setup.init.t + setup.sim.t_max;

    let w = p.publish_weather();
    if delivered() {
        a.on_datagram(&w)?;
    }
    while !p.plant.landed() {
        if p.plant.state.t > t_end {
            return Err(RunError::Timeout(setup.sim.t_max).into());
        }
        let s = p.publish_state();
        if delivered() {
            if let Some(cmd) = a.on_datagram(&s)? {
                if delivered() {
                    p.on_datagram(&cmd);
                }
            }
        }
        p.advance()?;
    }
    let hb = p.publish_heartbeat();
    a.on_datagram(&hb)?;
    let mut phases = p.phases.clone();
    record_phase(&mut phases, GuidancePhase::Terminal);
    let summary = summarize(&p.plant, &a.autopilot, phases);
    Ok(SitlRun {
        log: p.log,
        summary,
        plant_link: p.stats,
        autopilot_link: a.stats,
    })
}

/// Plant loop settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantLoop {
    pub rate_hz: f64,
    /// Hold each step to its wall-clock period.
    pub pace: bool,
    /// How long an unpaced step waits for the answering command.
    pub reply_timeout: Duration,
    /// How long to wait for the first command before giving up.
    pub startup_timeout: Duration,
}

impl PlantLoop {
    pub fn new(rate_hz: f64) -> Self {
        Self {
            rate_hz,
            pace: true,
            reply_timeout: Duration::from_millis(500),
            startup_timeout: Duration::from_secs(30),
        }
    }

    fn period(&self) -> Duration {
        Duration::from_secs_f64(1.0 / self.rate_hz)
    }
}

/// Drives a plant endpoint over a transport until touchdown or `t_max`.
pub fn run_plant<T: Transport>(
    ep: &mut PlantEndpoint,
    transport: &mut T,
    opts: &PlantLoop,
) -> Result<(), BridgeError> {
    let t_end = ep.plant.state.t + ep.plant.sim.t_max;
    let w = ep.publish_weather();
    transport.send(&w)?;
    let started = Instant::now();
    let mut heard = false;
    while !ep.plant.landed() {
        if ep.plant.state.t > t_end {
            return Err(RunError::Timeout(ep.plant.sim.t_max).into());
        }
        let tick = Instant::now();
        let s = ep.publish_state();
        transport.send(&s)?;
        let wait = if opts.pace {
            opts.period()
        } else if heard {
            opts.reply_timeout
        } else {
            opts.startup_timeout
        };
        let deadline = tick + wait;
        loop {
            let now = Instant::now();
            if now >= deadline {
                break;
            }
            if let Some(d) = transport.recv(deadline - now)? {
                ep.on_datagram(&d);
                if ep.answered() {
                    heard = true;
                    if !opts.pace {
                        break;
                    }
                }
            }
        }
        if !heard && started.elapsed() > opts.startup_timeout {
            return Err(BridgeError::PeerSilent(opts.startup_timeout));
        }
        ep.advance()?;
    }
    let hb = ep.publish_heartbeat();
    transport.send(&hb)?;
    Ok(())
}

/// Serves an autopilot endpoint until the plant's end-of-session heartbeat
/// or `idle` without any datagram.
pub fn run_autopilot<T: Transport>(
    ep: &mut AutopilotEndpoint,
    transport: &mut T,
    idle: Duration,
) -> Result<(), BridgeError> {
    while !ep.finished {
        match transport.recv(idle)? {
            Some(d) => {
                if let Some(reply) = ep.on_datagram(&d)? {
                    transport.send(&reply)?;
                }
            }
            None if ep.stats.received == 0 => return Err(BridgeError::PeerSilent(idle)),
            None => return Ok(()),
        }
    }
    Ok(())
}

/// Runs plant and autopilot on two threads over the given transports and
/// collects the same outputs as [`run_lockstep`].
pub fn run_threaded<P, A>(
    setup: &RunSetup,
    mut plant_transport: P,
    mut autopilot_transport: A,
    opts: &PlantLoop,
    idle: Duration,
) -> Result<SitlRun, BridgeError>
where
    P: Transport + Send,
    A: Transport + Send,
{
    let plant = Plant::new(
        setup.init,
        setup.autopilot.params,
        setup.autopilot.envelope,
        setup.weather,
        setup.ground,
        setup.sim,
    );
    let mut p = PlantEndpoint::new(plant);
    let mut a = AutopilotEndpoint::new(Autopilot::new(setup.autopilot.clone()), setup.sim.dt_plant);
    let (plant_result, autopilot_result) = std::thread::scope(|scope| {
        let ap = scope.spawn(|| run_autopilot(&mut a, &mut autopilot_transport, idle));
        let pr = run_plant(&mut p, &mut plant_transport, opts);
        (pr, ap.join().expect("autopilot thread panicked"))
    });
    plant_result?;
    autopilot_result?;
    let mut phases = p.phases.clone();
    record_phase(&mut phases, GuidancePhase::Terminal);
    let summary = summarize(&p.plant, &a.autopilot, phases);
    Ok(SitlRun {
        log: p.log,
        summary,
        plant_link: p.stats,
        autopilot_link: a.stats,
    })
}
