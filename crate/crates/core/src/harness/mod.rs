//! Deterministic experiment runner: series replay through the cache,
//! privacy overhead timing and multi-process cluster scenarios.

mod cache_exp;
mod privacy_exp;
mod scenario;
mod series;

pub use cache_exp::{
    emit_report, parse_delta, parse_delta_grid, parse_error_grid, parse_model_spec, run_cache_experiment,
    CacheExperiment, CacheGrid, ComboResult, TradeoffRow, TRADEOFF_HEADER,
};
pub use privacy_exp::{run_privacy_overhead, write_overhead_csv, OverheadRow, OVERHEAD_HEADER};
pub use scenario::{
    run_cluster_scenario, Action, Assertion, ClientDecl, DeviceDecl, EdgeDecl, QueryRecord, Scenario,
    ScenarioReport, ScheduledAction,
};
pub use series::{generate, ReplaySeries, SeriesKind, DAY_MS, HOUR_MS};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("series: {0}")]
    Series(String),
    #[error("grid: {0}")]
    Grid(String),
    #[error("scenario line {line}: {message}")]
    Scenario { line: usize, message: String },
    #[error("scenario timed out: {0}")]
    ScenarioTimeout(String),
    #[error("cache: {0}")]
    Cache(#[from] crate::cache::CacheError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(String),
    #[error("{0}")]
    Other(String),
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

/// Nearest-rank percentile of an ascending slice; 0 for an empty one.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (p / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[cfg(test)]
mod tests;
