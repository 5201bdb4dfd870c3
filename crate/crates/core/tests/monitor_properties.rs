use deadstick::dynamics::{AircraftState, GliderParams};
use deadstick::models::{default_model_set, ENGINE_OUT};
use deadstick::monitor::{
    identify_model, residual_histories, Mode, Monitor, ResidualHistory, Thresholds,
};
use nalgebra::DVector;
use proptest::prelude::*;
use proptest::test_runner::FileFailurePersistence;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        failure_persistence: Some(Box::new(FileFailurePersistence::WithSource("regressions"))),
        ..ProptestConfig::default()
    }
}

const DT: f64 = 0.01;
const WINDOW: usize = 100;

/// Engine-out model outputs plus first-order Gauss-Markov noise of
/// stationary deviation `sigma` on both channels.
fn engine_out_measurements(seed: u64, sigma: f64) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let models = default_model_set(&GliderParams::default());
    let truth = models.iter().find(|m| m.id == ENGINE_OUT).unwrap();
    let inputs: Vec<DVector<f64>> = (0..WINDOW)
        .map(|k| {
            let t = k as f64 * DT;
            // Pitch sine, throttle still demanded after the failure.
            DVector::from_vec(vec![0.05 * (3.0 * t).sin(), 0.6])
        })
        .collect();
    let clean = truth.predict_outputs(&DVector::zeros(2), &inputs, DT);
    let tau: f64 = 0.5;
    let phi = (-DT / tau).exp();
    let drive = Normal::new(0.0, sigma * (1.0 - phi * phi).sqrt()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut n = [
        Normal::new(0.0, sigma).unwrap().sample(&mut rng),
        Normal::new(0.0, sigma).unwrap().sample(&mut rng),
    ];
    let measured = clean
        .iter()
        .map(|y| {
            let out = DVector::from_vec(vec![y[0] + n[0], y[1] + n[1]]);
            n = [phi * n[0] + drive.sample(&mut rng), phi * n[1] + drive.sample(&mut rng)];
            out
        })
        .collect();
    (measured, inputs)
}

#[test]
fn engine_out_is_identified_in_noise() {
    let models = default_model_set(&GliderParams::default());
    let correct = (0..100u64)
        .filter(|&seed| {
            let (measured, inputs) = engine_out_measurements(seed, 0.1);
            let h = residual_histories(&models, &measured, &DVector::zeros(2), &inputs, DT);
            identify_model(&h, WINDOW) == Ok(ENGINE_OUT)
        })
        .count();
    assert!(correct >= 99, "identified {correct}/100");
}

proptest! {
    #![proptest_config(cases(500))]

    #[test]
    fn identification_is_scale_equivariant(
        rows in prop::collection::vec(prop::collection::vec(0.0..10.0f64, 30), 2..5),
        scale in 1e-3..1e3f64,
    ) {
        let hist: Vec<ResidualHistory> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| ResidualHistory { model: i as u8, residuals: r.clone() })
            .collect();
        let scaled: Vec<ResidualHistory> = hist
            .iter()
            .map(|h| ResidualHistory {
                model: h.model,
                residuals: h.residuals.iter().map(|v| v * scale).collect(),
            })
            .collect();
        prop_assert_eq!(identify_model(&hist, 20), identify_model(&scaled, 20));
    }

    #[test]
    fn clean_step_fault_is_detected_after_exactly_n_samples(
        onset in 0usize..2000,
        n_detect in 1u32..60,
    ) {
        let th = Thresholds { n_detect, ..Thresholds::default() };
        let mut m = Monitor::default();
        let mut detected_at = None;
        for k in 0..onset + 200 {
            let rpm = if k >= onset { 0.0 } else { 2400.0 };
            let s = AircraftState { t: k as f64 * DT, ..AircraftState::level(0.0, 0.0, 1000.0, 0.0, 35.0, rpm) };
            m = m.update(&s, &th);
            if detected_at.is_none() && m.verdict.mode != Mode::Normal {
                detected_at = Some(k);
            }
        }
        prop_assert_eq!(detected_at, Some(onset + n_detect as usize));
    }

    #[test]
    fn safe_mode_is_never_left(rpms in prop::collection::vec(prop_oneof![Just(0.0), Just(2400.0)], 1..400)) {
        let th = Thresholds { n_detect: 3, ..Thresholds::default() };
        let mut m = Monitor::default();
        let mut entered = false;
        for (k, rpm) in rpms.iter().enumerate() {
            let s = AircraftState { t: k as f64 * DT, ..AircraftState::level(0.0, 0.0, 1000.0, 0.0, 35.0, *rpm) };
            m = m.update(&s, &th);
            if entered {
                prop_assert_eq!(m.verdict.mode, Mode::SafeMode(ENGINE_OUT));
            }
            entered |= m.verdict.mode != Mode::Normal;
        }
    }
}
