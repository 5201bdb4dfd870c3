use deadstick::control::AttitudeCommand;
use deadstick::dynamics::{step, AircraftState, GliderParams};
use deadstick::weather::{sample, WeatherConfig, WindSample, WindStream};
use proptest::prelude::*;
use proptest::test_runner::FileFailurePersistence;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        failure_persistence: Some(Box::new(FileFailurePersistence::WithSource("regressions"))),
        ..ProptestConfig::default()
    }
}

fn glider(v_opt: f64, ratio: f64) -> GliderParams {
    GliderParams::from_glide_ratio(v_opt, ratio)
}

fn engine_out(psi: f64, alt: f64) -> AircraftState {
    AircraftState::level(0.0, 0.0, alt, psi, 35.0, 0.0)
}

proptest! {
    #![proptest_config(cases(256))]

    #[test]
    fn energy_never_increases_without_engine(
        psi in -3.1..3.1f64,
        roll in -0.5..0.5f64,
        pitch in -0.3..0.3f64,
        w_n in -15.0..15.0f64,
        w_e in -15.0..15.0f64,
        ratio in 7.0..12.0f64,
    ) {
        let params = glider(35.0, ratio);
        let cmd = AttitudeCommand { roll_cmd: roll, pitch_cmd: pitch };
        let wind = WindSample { w_n, w_e, w_up: 0.0, dv: 0.0 };
        let mut s = engine_out(psi, 2000.0);
        for _ in 0..2000 {
            let next = *step(&s, &cmd, &wind, &params, 0.01, 0.0).unwrap().state();
            prop_assert!(
                next.specific_energy(params.g) <= s.specific_energy(params.g),
                "energy rose at t = {}", next.t
            );
            s = next;
        }
    }

    #[test]
    fn constant_bank_turn_rate(phi in -0.6..0.6f64, v in 30.0..45.0f64) {
        let params = glider(v, 9.0);
        let mut s = AircraftState { phi, ..AircraftState::level(0.0, 0.0, 3000.0, 0.0, v, 0.0) };
        s.gamma = params.gamma_opt;
        let cmd = AttitudeCommand { roll_cmd: phi, pitch_cmd: 0.0 };
        let dt = 0.05;
        let mut turned = 0.0;
        for _ in 0..20 {
            let next = *step(&s, &cmd, &WindSample::CALM, &params, dt, 0.0).unwrap().state();
            turned += deadstick::angle::wrap_pi(next.psi - s.psi);
            s = next;
        }
        let expected = params.g / v * phi.tan() * 1.0;
        prop_assert!((turned - expected).abs() < 1e-6, "{turned} vs {expected}");
    }

    #[test]
    fn step_is_deterministic(
        psi in -3.1..3.1f64,
        roll in -0.5..0.5f64,
        pitch in -0.2..0.2f64,
        dv in -3.0..3.0f64,
        dt in 0.001..0.1f64,
    ) {
        let params = GliderParams::default();
        let s = engine_out(psi, 800.0);
        let cmd = AttitudeCommand { roll_cmd: roll, pitch_cmd: pitch };
        let wind = WindSample { w_n: 1.0, w_e: -2.0, w_up: 0.3, dv };
        let a = step(&s, &cmd, &wind, &params, dt, 0.0).unwrap();
        let b = step(&s, &cmd, &wind, &params, dt, 0.0).unwrap();
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn heading_stays_in_half_open_interval(psi in -std::f64::consts::PI..std::f64::consts::PI, roll in -0.6..0.6f64) {
        let params = GliderParams::default();
        let cmd = AttitudeCommand { roll_cmd: roll, pitch_cmd: 0.0 };
        let mut s = engine_out(psi, 3000.0);
        for _ in 0..300 {
            s = *step(&s, &cmd, &WindSample::CALM, &params, 0.1, 0.0).unwrap().state();
            prop_assert!(s.psi > -std::f64::consts::PI && s.psi <= std::f64::consts::PI);
        }
    }
}

#[test]
fn rk4_halving_step_shrinks_error_sixteenfold() {
    let params = GliderParams::default();
    let s0 = AircraftState {
        phi: 0.1,
        ..AircraftState::level(0.0, 0.0, 3000.0, 0.3, 35.0, 0.0)
    };
    let cmd = AttitudeCommand {
        roll_cmd: 0.5,
        pitch_cmd: -0.08,
    };
    let fly = |dt: f64| {
        let n = (4.0 / dt).round() as usize;
        (0..n).fold(s0, |s, _| {
            *step(&s, &cmd, &WindSample::CALM, &params, dt, 0.0)
                .unwrap()
                .state()
        })
    };
    let reference = fly(0.001);
    let err = |s: AircraftState| {
        (s.north - reference.north)
            .hypot(s.east - reference.east)
            .hypot(s.alt - reference.alt)
    };
    let coarse = err(fly(0.1));
    let fine = err(fly(0.05));
    assert!(coarse / fine >= 8.0, "ratio {}", coarse / fine);
}

#[test]
fn same_seed_gives_identical_wind_sequences() {
    let cfg = WeatherConfig {
        wind_dir_deg: 14.0,
        wind_speed_kts: 7.0,
        turbulence_pct: 12.0,
        gust_increase_kts: 22.0,
        wind_shear: 8.0,
        seed: 42,
    };
    let run = || {
        let mut stream = WindStream::new(cfg.seed);
        let mut bits = Vec::new();
        for k in 0..20_000 {
            let (w, next) = sample(&cfg, 1500.0 - k as f64 * 0.05, k as f64 * 0.01, stream);
            stream = next;
            bits.push([w.w_n.to_bits(), w.w_e.to_bits(), w.w_up.to_bits(), w.dv.to_bits()]);
        }
        bits
    };
    assert_eq!(run(), run());
}

#[test]
fn zero_config_is_calm_everywhere() {
    let cfg = WeatherConfig::default();
    let mut stream = WindStream::new(7);
    for k in 0..10_000 {
        let (w, next) = sample(&cfg, 100.0 + k as f64, k as f64 * 0.01, stream);
        stream = next;
        assert_eq!(w, WindSample::CALM);
    }
}
