//! Datagram bridge between a plant process and an autopilot process.

pub mod endpoint;
pub mod frame;
pub mod transport;

pub use endpoint::{
    run_autopilot, run_lockstep, run_plant, AutopilotEndpoint, BridgeError, LinkStats,
    PlantEndpoint, PlantLoop, SitlRun, PEER_TIMEOUT, run_threaded,
};
pub use frame::{decode_frame, encode_frame, CommandPayload, Frame, FrameError, Message, MsgType};
pub use transport::{loopback_pair, Lossy, Loopback, SitlAddrs, Transport, Udp};
