//! Shared inputs for the benchmarks.

use constellation_core::harness::{generate, ReplaySeries, SeriesKind};
use constellation_core::Millis;

/// Fifteen minutes, the usual sampling period.
pub const PERIOD: Millis = 900_000;

const GOLDEN: &str = include_str!("../../../fixtures/cql/valid.cql");

/// The golden valid statements, one per non-comment line.
pub fn queries() -> Vec<&'static str> {
    GOLDEN
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

/// A seeded series of `steps` points, one per `PERIOD`.
pub fn series(kind: &str, steps: usize) -> ReplaySeries {
    let kind = SeriesKind::preset(kind).unwrap_or_else(|| panic!("unknown series kind {kind}"));
    generate(&kind, steps, PERIOD, 1)
}
