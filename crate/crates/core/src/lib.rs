//! Engine-out emergency landing for a small fixed-wing UAV.
//!
//! A point-mass glider plant, seeded wind, envelope monitoring with model
//! identification, a saturated attitude reference law, carrot-chasing
//! landing guidance, offline site feasibility, and a datagram bridge for
//! running plant and autopilot as separate processes.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angle;
pub mod autopilot;
pub mod control;
pub mod dynamics;
pub mod guidance;
pub mod harness;
pub mod models;
pub mod monitor;
pub mod planner;
pub mod scenario;
pub mod sitl;
pub mod tracking;
pub mod weather;
