//! Replay series and seeded synthetic generators.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::value::DataType;
use crate::Millis;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplaySeries {
    pub name: String,
    pub points: Vec<(Millis, f64)>,
    pub datatype: DataType,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct Row {
    timestamp_ms: Millis,
    value: f64,
}

impl ReplaySeries {
    pub fn new(name: &str, points: Vec<(Millis, f64)>) -> Result<Self, HarnessError> {
        if let Some(w) = points.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(HarnessError::Series(format!(
                "timestamps must be strictly increasing ({} then {})",
                w[0].0, w[1].0
            )));
        }
        Ok(Self {
            name: name.to_string(),
            points,
            datatype: DataType::Double,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Median sampling interval.
    pub fn period(&self) -> Millis {
        let mut steps: Vec<Millis> = self.points.windows(2).map(|w| w[1].0 - w[0].0).collect();
        steps.sort_unstable();
        steps.get(steps.len() / 2).copied().unwrap_or(0)
    }

    /// Value at the latest point not after `t`.
    pub fn value_at(&self, t: Millis) -> Option<f64> {
        let i = self.points.partition_point(|p| p.0 <= t);
        (i > 0).then(|| self.points[i - 1].1)
    }

    /// CSV `timestamp_ms,value` with a header row.
    pub fn read_csv(name: &str, input: impl Read) -> Result<Self, HarnessError> {
        let mut r = csv::Reader::from_reader(input);
        let mut points = Vec::new();
        for row in r.deserialize::<Row>() {
            let row = row.map_err(|e| HarnessError::Series(e.to_string()))?;
            points.push((row.timestamp_ms, row.value));
        }
        Self::new(name, points)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("series").to_string();
        let f = std::fs::File::open(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::read_csv(&name, f)
    }

    pub fn write_csv(&self, out: impl Write) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        for &(timestamp_ms, value) in &self.points {
            w.serialize(Row { timestamp_ms, value })?;
        }
        w.flush().map_err(|e| HarnessError::Io(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum SeriesKind {
    /// `intercept + slope * hours`
    #[serde(rename_all = "camelCase")]
    Linear { intercept: f64, slope_per_hour: f64 },
    /// Coefficients in ascending powers of hours.
    Polynomial { coeffs: Vec<f64> },
    #[serde(rename_all = "camelCase")]
    Diurnal {
        mean: f64,
        amplitude: f64,
        period_ms: Millis,
        noise: f64,
    },
    #[serde(rename_all = "camelCase")]
    Step { low: f64, high: f64, period_ms: Millis },
    #[serde(rename_all = "camelCase")]
    RandomWalk { start: f64, sigma: f64 },
}

pub const DAY_MS: Millis = 86_400_000;
pub const HOUR_MS: Millis = 3_600_000;

impl SeriesKind {
    pub fn name(&self) -> &'static str {
        match self {
            SeriesKind::Linear { .. } => "linear",
            SeriesKind::Polynomial { .. } => "polynomial",
            SeriesKind::Diurnal { .. } => "diurnal",
            SeriesKind::Step { .. } => "step",
            SeriesKind::RandomWalk { .. } => "random-walk",
        }
    }

    /// Named presets used by the command line.
    pub fn preset(name: &str) -> Option<Self> {
        Some(match name {
            "linear" => SeriesKind::Linear {
                intercept: 20.0,
                slope_per_hour: 0.4,
            },
            "polynomial" => SeriesKind::Polynomial {
                coeffs: vec![10.0, 0.5, 0.01],
            },
            "diurnal" => SeriesKind::Diurnal {
                mean: 15.0,
                amplitude: 5.0,
                period_ms: DAY_MS,
                noise: 0.1,
            },
            "step" => SeriesKind::Step {
                low: 10.0,
                high: 20.0,
                period_ms: 6 * HOUR_MS,
            },
            "random-walk" => SeriesKind::RandomWalk { start: 15.0, sigma: 0.2 },
            _ => return None,
        })
    }
}

/// `n` points every `step` ms starting at 0.
pub fn generate(kind: &SeriesKind, n: usize, step: Millis, seed: u64) -> ReplaySeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut walk = match kind {
        SeriesKind::RandomWalk { start, .. } => *start,
        _ => 0.0,
    };
    let points = (0..n)
        .map(|i| {
            let t = i as Millis * step;
            let hours = t as f64 / HOUR_MS as f64;
            let v = match kind {
                SeriesKind::Linear {
                    intercept,
                    slope_per_hour,
                } => intercept + slope_per_hour * hours,
                SeriesKind::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * hours + c),
                SeriesKind::Diurnal {
                    mean,
                    amplitude,
                    period_ms,
                    noise,
                } => {
                    let phase = 2.0 * std::f64::consts::PI * (t % period_ms) as f64 / *period_ms as f64;
                    let eps = if *noise > 0.0 {
                        Normal::new(0.0, *noise).expect("positive sigma").sample(&mut rng)
                    } else {
                        0.0
                    };
                    mean + amplitude * phase.sin() + eps
                }
                SeriesKind::Step { low, high, period_ms } => {
                    if (t / period_ms) % 2 == 0 {
                        *low
                    } else {
                        *high
                    }
                }
                SeriesKind::RandomWalk { sigma, .. } => {
                    if i > 0 {
                        walk += Normal::new(0.0, *sigma).expect("positive sigma").sample(&mut rng);
                    }
                    walk
                }
            };
            (t, v)
        })
        .collect();
    ReplaySeries {
        name: format!("{}-s{seed}", kind.name()),
        points,
        datatype: DataType::Double,
    }
}
