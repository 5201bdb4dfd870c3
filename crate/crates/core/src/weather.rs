//! Seedable wind field: steady wind with power-law shear, 1-cosine gusts and
//! first-order Gauss-Markov turbulence.
//!
//! The random stream is an explicit value. Feeding the same stream, config,
//! altitude and time always yields the same sample, and two clones of a stream
//! evolve identically.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Knots to meters per second.
pub const KTS_TO_MS: f64 = 0.514444;
/// Reference altitude of the shear power law, meters.
pub const SHEAR_REF_ALT: f64 = 500.0;
/// Shear exponent per unit of the shear index.
pub const SHEAR_EXPONENT_PER_INDEX: f64 = 0.05;
/// Mean time between gust onsets, seconds.
pub const GUST_MEAN_INTERVAL: f64 = 60.0;
/// Duration of one 1-cosine gust pulse, seconds.
pub const GUST_DURATION: f64 = 4.0;
/// Turbulence correlation time, seconds.
pub const TURBULENCE_CORRELATION: f64 = 2.0;
/// Turbulence standard deviation per percent of intensity, m/s.
pub const TURBULENCE_SIGMA_PER_PCT: f64 = 0.05;
/// Vertical wind is limited to this fraction of the horizontal wind magnitude.
pub const VERTICAL_RATIO_LIMIT: f64 = 0.3;

/// The five weather knobs of a scenario plus the stream seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct WeatherConfig {
    /// Direction the wind blows from, degrees clockwise from north.
    pub wind_dir_deg: f64,
    pub wind_speed_kts: f64,
    pub turbulence_pct: f64,
    pub gust_increase_kts: f64,
    /// Dimensionless shear severity index.
    pub wind_shear: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeatherError {
    #[error("{field}: {value} outside {range}")]
    OutOfRange {
        field: &'static str,
        value: f64,
        range: &'static str,
    },
}

impl WeatherConfig {
    pub fn calm() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), WeatherError> {
        let checks: [(&'static str, f64, bool, &'static str); 5] = [
            (
                "wind_dir_deg",
                self.wind_dir_deg,
                (0.0..360.0).contains(&self.wind_dir_deg),
                "[0, 360)",
            ),
            (
                "wind_speed_kts",
                self.wind_speed_kts,
                self.wind_speed_kts >= 0.0 && self.wind_speed_kts.is_finite(),
                "[0, inf)",
            ),
            (
                "turbulence_pct",
                self.turbulence_pct,
                (0.0..=100.0).contains(&self.turbulence_pct),
                "[0, 100]",
            ),
            (
                "gust_increase_kts",
                self.gust_increase_kts,
                self.gust_increase_kts >= 0.0 && self.gust_increase_kts.is_finite(),
                "[0, inf)",
            ),
            (
                "wind_shear",
                self.wind_shear,
                self.wind_shear >= 0.0 && self.wind_shear.is_finite(),
                "[0, inf)",
            ),
        ];
        for (field, value, ok, range) in checks {
            if !ok {
                return Err(WeatherError::OutOfRange {
                    field,
                    value,
                    range,
                });
            }
        }
        Ok(())
    }

    /// Turbulence standard deviation, m/s.
    pub fn turbulence_sigma(&self) -> f64 {
        TURBULENCE_SIGMA_PER_PCT * self.turbulence_pct
    }

    /// Unit vector (north, east) the wind blows toward.
    fn downwind(&self) -> (f64, f64) {
        let toward = (self.wind_dir_deg + 180.0).to_radians();
        (toward.cos(), toward.sin())
    }

    /// Steady wind magnitude at `alt` after shear scaling, m/s.
    pub fn steady_speed(&self, alt: f64) -> f64 {
        let base = self.wind_speed_kts * KTS_TO_MS;
        if self.wind_shear == 0.0 || base == 0.0 {
            return base;
        }
        let exponent = SHEAR_EXPONENT_PER_INDEX * self.wind_shear;
        base * (alt.max(1.0) / SHEAR_REF_ALT).powf(exponent)
    }
}

/// Wind acting on the aircraft: air-mass velocity (north, east, up) and an
/// airspeed perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct WindSample {
    pub w_n: f64,
    pub w_e: f64,
    pub w_up: f64,
    pub dv: f64,
}

impl WindSample {
    pub const CALM: WindSample = WindSample {
        w_n: 0.0,
        w_e: 0.0,
        w_up: 0.0,
        dv: 0.0,
    };

    pub fn horizontal_speed(&self) -> f64 {
        self.w_n.hypot(self.w_e)
    }
}

/// Random-stream state of the wind field.
#[derive(Debug, Clone, PartialEq)]
pub struct WindStream {
    rng: ChaCha8Rng,
    last_t: Option<f64>,
    // Gauss-Markov states: north, east, up, airspeed.
    turbulence: [f64; 4],
    next_gust: Option<f64>,
    gust_start: Option<f64>,
}

impl WindStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            last_t: None,
            turbulence: [0.0; 4],
            next_gust: None,
            gust_start: None,
        }
    }

    fn draw_gap(&mut self) -> f64 {
        let exp = Exp::new(1.0 / GUST_MEAN_INTERVAL).expect("positive rate");
        exp.sample(&mut self.rng)
    }
}

fn gust_shape(elapsed: f64) -> f64 {
    if (0.0..GUST_DURATION).contains(&elapsed) {
        0.5 * (1.0 - (std::f64::consts::TAU * elapsed / GUST_DURATION).cos())
    } else {
        0.0
    }
}

/// Samples the wind at altitude `alt` and time `t`, returning the advanced stream.
///
/// Calls are expected in non-decreasing `t`; a repeated `t` leaves the
/// turbulence state unchanged.
pub fn sample(
    config: &WeatherConfig,
    alt: f64,
    t: f64,
    stream: WindStream,
) -> (WindSample, WindStream) {
    let mut stream = stream;

    // Turbulence.
    let sigma = config.turbulence_sigma();
    let dt = stream.last_t.map_or(0.0, |last| (t - last).max(0.0));
    if sigma > 0.0 {
        if stream.last_t.is_none() {
            for x in stream.turbulence.iter_mut() {
                let n: f64 = stream.rng.sample(StandardNormal);
                *x = sigma * n;
            }
        } else if dt > 0.0 {
            let decay = (-dt / TURBULENCE_CORRELATION).exp();
            let drive = sigma * (1.0 - decay * decay).sqrt();
            for x in stream.turbulence.iter_mut() {
                let n: f64 = stream.rng.sample(StandardNormal);
                *x = decay * *x + drive * n;
            }
        }
    }
    stream.last_t = Some(t);

    // Gusts: onsets form a Poisson process; the pulse in progress belongs to the
    // latest onset at or before t.
    let mut gust = 0.0;
    if config.gust_increase_kts > 0.0 {
        let mut next = match stream.next_gust {
            Some(at) => at,
            None => stream.draw_gap(),
        };
        while next <= t {
            stream.gust_start = Some(next);
            next += stream.draw_gap();
        }
        stream.next_gust = Some(next);
        if let Some(start) = stream.gust_start {
            gust = config.gust_increase_kts * KTS_TO_MS * gust_shape(t - start);
        }
    }

    let (dn, de) = config.downwind();
    let speed = config.steady_speed(alt) + gust;
    let [tn, te, tu, tv] = stream.turbulence;
    let w_n = speed * dn + tn;
    let w_e = speed * de + te;
    let limit = VERTICAL_RATIO_LIMIT * w_n.hypot(w_e);
    let sample = WindSample {
        w_n,
        w_e,
        w_up: tu.clamp(-limit, limit),
        dv: tv,
    };
    (sample, stream)
}
