//! Cache replay over a (model, delta, error) grid and the trade-off report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{percentile, HarnessError, ReplaySeries};
use crate::cache::{
    write_error_samples_csv, write_metrics_csv, AdapterRegistry, CacheKey, CachePolicy, CacheState, ErrorSample,
    MetricsRow, ModelRegistry, ModelSpec, ServedBy,
};
use crate::value::Value;
use crate::Millis;

pub const TRADEOFF_HEADER: &str = "delta_ms,reduction,median_err,p95_err";
const REPLAY_DEVICE: &str = "replay";
const REPLAY_PROPERTY: &str = "value";

#[derive(Debug, Clone, PartialEq)]
pub struct CacheGrid {
    pub models: Vec<ModelSpec>,
    /// `None` means DELTA absent.
    pub deltas: Vec<Option<Millis>>,
    /// `None` means ERROR absent.
    pub errors: Vec<Option<f64>>,
    /// Lookup period; defaults to the series' median step.
    pub period: Option<Millis>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffRow {
    pub model: String,
    pub error_tol: Option<f64>,
    pub delta_ms: Option<Millis>,
    pub lookups: u64,
    pub hits: u64,
    pub reduction: f64,
    pub median_err: f64,
    pub p95_err: f64,
    pub max_err: f64,
}

#[derive(Debug, Clone)]
pub struct ComboResult {
    pub row: TradeoffRow,
    pub metrics: MetricsRow,
    pub samples: Vec<ErrorSample>,
    /// Cache-served values whose error against truth exceeded ERROR.
    pub unsafe_served: usize,
    /// Cache hits immediately following a failed ERROR check.
    pub hits_after_violation: usize,
    /// Cache hits later than DELTA after the last device query.
    pub stale_served: usize,
    /// Harness-counted hits and lookups agree with the cache's own counters.
    pub counters_match: bool,
}

#[derive(Debug, Clone)]
pub struct CacheExperiment {
    pub series: String,
    pub period: Millis,
    pub results: Vec<ComboResult>,
}

/// Replays `series` once per grid combination with a fresh cache state each time.
pub fn run_cache_experiment(series: &ReplaySeries, grid: &CacheGrid) -> Result<CacheExperiment, HarnessError> {
    if series.is_empty() {
        return Err(HarnessError::Series("empty series".into()));
    }
    let period = grid.period.unwrap_or_else(|| series.period()).max(1);
    let models = ModelRegistry::default();
    let adapter = AdapterRegistry::default().for_type(series.datatype);
    let start = series.points[0].0;
    let end = series.points[series.len() - 1].0;

    let mut results = Vec::new();
    for spec in &grid.models {
        for &error in &grid.errors {
            for &delta in &grid.deltas {
                let model = models.build(spec)?;
                let mut state = CacheState::new(
                    CacheKey::new(REPLAY_DEVICE, REPLAY_PROPERTY),
                    model,
                    adapter.clone(),
                    CachePolicy { delta, error },
                );
                let mut samples = Vec::new();
                let (mut lookups, mut hits) = (0u64, 0u64);
                let (mut unsafe_served, mut hits_after_violation, mut stale_served) = (0, 0, 0);
                let mut violated = false;
                let mut t = start;
                while t <= end {
                    let truth = series.value_at(t).expect("t is within the series");
                    let last_query = state.last_device_query();
                    let served = state
                        .lookup(t, || Ok::<_, std::convert::Infallible>(Value::Double(truth)))
                        .map_err(|e| HarnessError::Other(e.to_string()))?;
                    lookups += 1;
                    match served.served_by {
                        ServedBy::Cache => {
                            hits += 1;
                            let err = state.observe_truth(&served.value, &Value::Double(truth))?;
                            if error.is_some_and(|tol| err > tol) {
                                unsafe_served += 1;
                            }
                            if violated {
                                hits_after_violation += 1;
                            }
                            if match (last_query, delta) {
                                (Some(q), Some(d)) => t >= q + d,
                                _ => true,
                            } {
                                stale_served += 1;
                            }
                            violated = false;
                            samples.push(ErrorSample {
                                device_id: REPLAY_DEVICE.into(),
                                property: REPLAY_PROPERTY.into(),
                                model: spec.name.clone(),
                                delta_ms: delta,
                                time_ms: t,
                                error: err,
                            });
                        }
                        ServedBy::Device => {
                            violated = matches!((served.check_diff, error), (Some(d), Some(tol)) if d > tol);
                        }
                    }
                    t += period;
                }
                let metrics = state.metrics_row();
                let m = state.metrics();
                let counters_match = m.hits == hits && m.hits + m.misses == lookups;
                let mut errs: Vec<f64> = samples.iter().map(|s| s.error).collect();
                errs.sort_by(f64::total_cmp);
                let row = TradeoffRow {
                    model: spec.name.clone(),
                    error_tol: error,
                    delta_ms: delta,
                    lookups,
                    hits,
                    reduction: m.query_reduction,
                    median_err: percentile(&errs, 50.0),
                    p95_err: percentile(&errs, 95.0),
                    max_err: errs.last().copied().unwrap_or(0.0),
                };
                results.push(ComboResult {
                    row,
                    metrics,
                    samples,
                    unsafe_served,
                    hits_after_violation,
                    stale_served,
                    counters_match,
                });
            }
        }
    }
    Ok(CacheExperiment {
        series: series.name.clone(),
        period,
        results,
    })
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "none".to_string(), |v| v.to_string())
}

/// Writes the report files into `dir` and returns their paths.
///
/// * `tradeoff.csv`: the first model and first ERROR value across the delta grid
/// * `tradeoff_all.csv`: every combination
/// * `metrics.csv`, `error_samples.csv`: cache-module format
/// * `error_boxplot.csv`: per-combination five-number summary of served errors
pub fn emit_report(exp: &CacheExperiment, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: Vec<u8>| -> Result<(), HarnessError> {
        let p = dir.join(name);
        std::fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };

    let mut tradeoff = format!("{TRADEOFF_HEADER}\n");
    if let Some(first) = exp.results.first() {
        for r in exp
            .results
            .iter()
            .filter(|r| r.row.model == first.row.model && r.row.error_tol == first.row.error_tol)
        {
            let _ = writeln!(
                tradeoff,
                "{},{:.6},{:.6},{:.6}",
                opt(r.row.delta_ms),
                r.row.reduction,
                r.row.median_err,
                r.row.p95_err
            );
        }
    }
    put("tradeoff.csv", tradeoff.into_bytes())?;

    let mut all = String::from("model,error_tol,delta_ms,lookups,hits,reduction,median_err,p95_err,max_err\n");
    for r in &exp.results {
        let row = &r.row;
        let _ = writeln!(
            all,
            "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
            row.model,
            opt(row.error_tol),
            opt(row.delta_ms),
            row.lookups,
            row.hits,
            row.reduction,
            row.median_err,
            row.p95_err,
            row.max_err
        );
    }
    put("tradeoff_all.csv", all.into_bytes())?;

    let rows: Vec<MetricsRow> = exp.results.iter().map(|r| r.metrics.clone()).collect();
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &rows)?;
    put("metrics.csv", buf)?;

    let samples: Vec<ErrorSample> = exp.results.iter().flat_map(|r| r.samples.iter().cloned()).collect();
    let mut buf = Vec::new();
    write_error_samples_csv(&mut buf, &samples)?;
    put("error_samples.csv", buf)?;

    let mut dat = String::from("index,label,min,q1,median,q3,max,n\n");
    for (i, r) in exp.results.iter().enumerate() {
        let mut errs: Vec<f64> = r.samples.iter().map(|s| s.error).collect();
        errs.sort_by(f64::total_cmp);
        let label = format!("{}/d={}/e={}", r.row.model, opt(r.row.delta_ms), opt(r.row.error_tol));
        let _ = writeln!(
            dat,
            "{i},{label},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            errs.first().copied().unwrap_or(0.0),
            percentile(&errs, 25.0),
            percentile(&errs, 50.0),
            percentile(&errs, 75.0),
            errs.last().copied().unwrap_or(0.0),
            errs.len()
        );
    }
    put("error_boxplot.csv", dat.into_bytes())?;
    Ok(written)
}

/// One delta: `none`, a multiple of the period (`P`, `4P`), or a duration
/// (`900000`, `900000ms`, `30s`, `15m`, `1h`).
pub fn parse_delta(text: &str, period: Millis) -> Result<Option<Millis>, HarnessError> {
    let t = text.trim();
    if t.eq_ignore_ascii_case("none") || t.eq_ignore_ascii_case("absent") {
        return Ok(None);
    }
    let bad = || HarnessError::Grid(format!("bad delta '{t}'"));
    if let Some(k) = t.strip_suffix('P').or_else(|| t.strip_suffix('p')) {
        let k: u64 = if k.is_empty() { 1 } else { k.parse().map_err(|_| bad())? };
        return Ok(Some(k * period));
    }
    let split = t.find(|c: char| !c.is_ascii_digit()).unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let n: u64 = num.parse().map_err(|_| bad())?;
    let scale = match unit {
        "" | "ms" => 1,
        "s" => 1_000,
        "m" | "min" => 60_000,
        "h" => 3_600_000,
        _ => return Err(bad()),
    };
    Ok(Some(n * scale))
}

pub fn parse_delta_grid(text: &str, period: Millis) -> Result<Vec<Option<Millis>>, HarnessError> {
    text.split(',').map(|d| parse_delta(d, period)).collect()
}

/// Comma-separated tolerances; `none` disables the ERROR check.
pub fn parse_error_grid(text: &str) -> Result<Vec<Option<f64>>, HarnessError> {
    text.split(',')
        .map(|e| {
            let e = e.trim();
            if e.eq_ignore_ascii_case("none") {
                Ok(None)
            } else {
                e.parse::<f64>()
                    .ok()
                    .filter(|v| *v >= 0.0)
                    .map(Some)
                    .ok_or_else(|| HarnessError::Grid(format!("bad error tolerance '{e}'")))
            }
        })
        .collect()
}

/// `Name` or `Name:key=value:key=value`, e.g. `Cyclic:season=96:window=200`.
pub fn parse_model_spec(text: &str) -> Result<ModelSpec, HarnessError> {
    let mut parts = text.trim().split(':');
    let name = parts.next().unwrap_or_default();
    if !ModelRegistry::default().contains(name) {
        return Err(HarnessError::Grid(format!("unknown model '{name}'")));
    }
    let mut spec = ModelSpec::named(name);
    for kv in parts {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| HarnessError::Grid(format!("bad model parameter '{kv}'")))?;
        let v: f64 = v
            .parse()
            .map_err(|_| HarnessError::Grid(format!("bad model parameter '{kv}'")))?;
        spec = spec.with(k, v);
    }
    Ok(spec)
}
