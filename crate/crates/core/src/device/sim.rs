//! Deterministic signals backing simulated device properties.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::value::{DataType, Value};
use crate::Millis;

const HOUR: f64 = 3_600_000.0;

fn day() -> Millis {
    86_400_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum Signal {
    Constant {
        value: Value,
    },
    #[serde(rename_all = "camelCase")]
    Linear {
        start: f64,
        slope_per_hour: f64,
    },
    /// Sinusoid with an optional bounded uniform jitter, reproducible per
    /// (seed, time).
    #[serde(rename_all = "camelCase")]
    Diurnal {
        mean: f64,
        amplitude: f64,
        #[serde(default = "day")]
        period_ms: Millis,
        #[serde(default)]
        phase_ms: Millis,
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Square wave: `low` for the first half of each period, then `high`.
    #[serde(rename_all = "camelCase")]
    Step {
        low: f64,
        high: f64,
        period_ms: Millis,
    },
    #[serde(rename_all = "camelCase")]
    Track {
        x0: f64,
        y0: f64,
        vx_per_hour: f64,
        vy_per_hour: f64,
    },
}

pub fn jitter(seed: u64, time: Millis, amplitude: f64) -> f64 {
    if amplitude == 0.0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ time.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.gen_range(-amplitude..=amplitude)
}

impl Signal {
    pub fn data_type(&self) -> DataType {
        match self {
            Signal::Constant { value } => value.data_type(),
            Signal::Track { .. } => DataType::CartesianCoordinates,
            _ => DataType::Double,
        }
    }

    pub fn sample(&self, time: Millis) -> Value {
        let t = time as f64;
        match self {
            Signal::Constant { value } => value.clone(),
            Signal::Linear { start, slope_per_hour } => Value::Double(start + slope_per_hour * t / HOUR),
            Signal::Diurnal {
                mean,
                amplitude,
                period_ms,
                phase_ms,
                noise,
                seed,
            } => {
                let phase = (time + phase_ms) as f64 / (*period_ms).max(1) as f64;
                let base = mean + amplitude * (std::f64::consts::TAU * phase).sin();
                Value::Double(base + jitter(*seed, time, *noise))
            }
            Signal::Step { low, high, period_ms } => {
                let p = (*period_ms).max(2);
                Value::Double(if time % p < p / 2 { *low } else { *high })
            }
            Signal::Track {
                x0,
                y0,
                vx_per_hour,
                vy_per_hour,
            } => Value::Coordinates {
                x: x0 + vx_per_hour * t / HOUR,
                y: y0 + vy_per_hour * t / HOUR,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signals_are_deterministic() {
        let s: Signal = serde_json::from_str(
            r#"{"kind": "diurnal", "mean": 15, "amplitude": 5, "noise": 0.2, "seed": 7}"#,
        )
        .unwrap();
        assert_eq!(s.sample(123_456), s.sample(123_456));
        let Value::Double(v) = s.sample(0) else { panic!() };
        assert!((v - 15.0).abs() <= 0.2);
    }

    #[test]
    fn linear_and_track() {
        let l = Signal::Linear { start: 20.0, slope_per_hour: 1.0 };
        assert_eq!(l.sample(1_800_000), Value::Double(20.5));
        let t: Signal = serde_json::from_str(
            r#"{"kind": "track", "x0": 0, "y0": 0, "vxPerHour": 3, "vyPerHour": 4}"#,
        )
        .unwrap();
        assert_eq!(t.sample(3_600_000), Value::Coordinates { x: 3.0, y: 4.0 });
    }
}
