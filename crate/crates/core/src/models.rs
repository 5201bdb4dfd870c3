//! Built-in representative model set.
//!
//! Longitudinal small-perturbation models with state `[dV, gamma]`, inputs
//! `[pitch_cmd, throttle]` and both states measured. They only feed residual
//! prediction; the point-mass plant remains the simulation truth.

use nalgebra::DMatrix;

use crate::dynamics::GliderParams;
use crate::monitor::{EnvelopeLimits, FaultModel, ModelId};

pub const NOMINAL: ModelId = 0;
pub const ENGINE_OUT: ModelId = 1;
pub const ELEVATOR_DEGRADED: ModelId = 2;

fn model(id: ModelId, name: &str, thrust: f64, pitch: f64, glider: &GliderParams) -> FaultModel {
    FaultModel {
        id,
        name: name.to_string(),
        a: DMatrix::from_row_slice(2, 2, &[-0.05, -9.81, 0.3, -2.0]),
        b: DMatrix::from_row_slice(2, 2, &[0.0, thrust, pitch, 0.0]),
        c: DMatrix::identity(2, 2),
        uncertainty_bound: 0.5,
        envelope: EnvelopeLimits::default(),
        glider: *glider,
    }
}

/// Nominal, engine-out and degraded-elevator models sharing `glider`.
pub fn default_model_set(glider: &GliderParams) -> Vec<FaultModel> {
    vec![
        model(NOMINAL, "nominal", 3.0, 2.0, glider),
        model(ENGINE_OUT, "engine-out", 0.0, 2.0, glider),
        model(ELEVATOR_DEGRADED, "elevator-degraded", 3.0, 0.8, glider),
    ]
}
