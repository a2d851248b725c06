//! DELTA/ERROR controller, counters and the shared store.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::{Arc, Mutex};

use serde::Serialize;

use super::{CacheError, CacheModel, DiffAdapter};
use crate::value::Value;
use crate::Millis;

/// Consecutive within-tolerance device queries needed to re-enable prediction.
pub const REENABLE_AFTER: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CachePolicy {
    /// `None` disables the cache entirely.
    pub delta: Option<Millis>,
    /// `None` disables the ERROR check.
    pub error: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ServedBy {
    Cache,
    Device,
}

impl ServedBy {
    pub fn as_str(self) -> &'static str {
        match self {
            ServedBy::Cache => "Cache",
            ServedBy::Device => "Device",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Served {
    pub value: Value,
    pub served_by: ServedBy,
    /// Device path only: diff between the device value and the model's
    /// prediction for the same instant, when the model could predict.
    pub check_diff: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum LookupError<E> {
    #[error("device query failed: {0}")]
    Device(E),
    #[error(transparent)]
    Cache(CacheError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub hits: u64,
    pub misses: u64,
    pub query_reduction: f64,
    pub error_samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CacheKey {
    pub device_id: String,
    pub property: String,
}

impl CacheKey {
    pub fn new(device_id: &str, property: &str) -> Self {
        Self {
            device_id: device_id.to_string(),
            property: property.to_string(),
        }
    }
}

pub struct CacheState {
    pub key: CacheKey,
    model: Box<dyn CacheModel>,
    adapter: Arc<dyn DiffAdapter>,
    pub policy: CachePolicy,
    last_device_query: Option<Millis>,
    prediction_enabled: bool,
    consecutive_accurate: u32,
    hits: u64,
    misses: u64,
    error_samples: Vec<f64>,
}

impl CacheState {
    pub fn new(
        key: CacheKey,
        model: Box<dyn CacheModel>,
        adapter: Arc<dyn DiffAdapter>,
        policy: CachePolicy,
    ) -> Self {
        Self {
            key,
            model,
            adapter,
            policy,
            last_device_query: None,
            prediction_enabled: true,
            consecutive_accurate: 0,
            hits: 0,
            misses: 0,
            error_samples: Vec::new(),
        }
    }

    pub fn model(&self) -> &dyn CacheModel {
        self.model.as_ref()
    }

    pub fn model_name(&self) -> &str {
        self.model.name()
    }

    pub fn prediction_enabled(&self) -> bool {
        self.prediction_enabled
    }

    pub fn consecutive_accurate(&self) -> u32 {
        self.consecutive_accurate
    }

    pub fn last_device_query(&self) -> Option<Millis> {
        self.last_device_query
    }

    /// Instant after which the cache must be bypassed.
    pub fn expiration_time(&self) -> Option<Millis> {
        let delta = self.policy.delta?;
        self.last_device_query.map(|t| t.saturating_add(delta))
    }

    /// True when a lookup at `time` would be answered from the model.
    pub fn can_serve(&self, time: Millis) -> bool {
        self.prediction_enabled
            && self.model.len() >= self.model.min_points()
            && self.expiration_time().is_some_and(|exp| time < exp)
    }

    pub fn lookup<E>(
        &mut self,
        time: Millis,
        query_device: impl FnOnce() -> Result<Value, E>,
    ) -> Result<Served, LookupError<E>> {
        if self.can_serve(time) {
            if let Ok(value) = self.model.predict_value(time) {
                self.hits += 1;
                return Ok(Served {
                    value,
                    served_by: ServedBy::Cache,
                    check_diff: None,
                });
            }
        }
        let actual = query_device().map_err(LookupError::Device)?;
        self.misses += 1;
        let check_diff = self.record_device_value(time, &actual).map_err(LookupError::Cache)?;
        Ok(Served {
            value: actual,
            served_by: ServedBy::Device,
            check_diff,
        })
    }

    fn record_device_value(&mut self, time: Millis, actual: &Value) -> Result<Option<f64>, CacheError> {
        let mut check = None;
        if self.model.len() >= self.model.min_points() {
            let predicted = self.model.predict_value(time)?;
            let d = self.adapter.diff(actual, &predicted)?;
            check = Some(d);
            match self.policy.error {
                Some(tol) if d > tol => {
                    self.prediction_enabled = false;
                    self.consecutive_accurate = 0;
                }
                _ => {
                    self.consecutive_accurate += 1;
                    if self.consecutive_accurate >= REENABLE_AFTER {
                        self.prediction_enabled = true;
                    }
                }
            }
        }
        // a second device read at the same instant adds nothing to the model
        if self.model.last_time().is_none_or(|last| time > last) {
            self.model.add_point(time, actual.clone())?;
        }
        self.last_device_query = Some(time);
        Ok(check)
    }

    /// Harness replay: record the error of a cache-served value against truth.
    pub fn observe_truth(&mut self, served: &Value, truth: &Value) -> Result<f64, CacheError> {
        let d = self.adapter.diff(served, truth)?;
        self.error_samples.push(d);
        Ok(d)
    }

    pub fn metrics(&self) -> Metrics {
        let total = self.hits + self.misses;
        Metrics {
            hits: self.hits,
            misses: self.misses,
            query_reduction: if total == 0 { 0.0 } else { self.hits as f64 / total as f64 },
            error_samples: self.error_samples.clone(),
        }
    }

    pub fn metrics_row(&self) -> MetricsRow {
        let m = self.metrics();
        MetricsRow {
            device_id: self.key.device_id.clone(),
            property: self.key.property.clone(),
            model: self.model.name().to_string(),
            delta_ms: self.policy.delta,
            error_tol: self.policy.error,
            lookups: m.hits + m.misses,
            hits: m.hits,
            reduction: m.query_reduction,
        }
    }
}

/// Shared cache keyed by (deviceId, property). Lookups on one key are
/// serialized by that key's mutex.
#[derive(Default, Clone)]
pub struct CacheStore {
    states: Arc<Mutex<BTreeMap<CacheKey, Arc<Mutex<CacheState>>>>>,
}

impl CacheStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_insert_with(
        &self,
        key: &CacheKey,
        init: impl FnOnce() -> Result<CacheState, CacheError>,
    ) -> Result<Arc<Mutex<CacheState>>, CacheError> {
        let mut map = self.states.lock().unwrap();
        if let Some(s) = map.get(key) {
            return Ok(s.clone());
        }
        let s = Arc::new(Mutex::new(init()?));
        map.insert(key.clone(), s.clone());
        Ok(s)
    }

    pub fn get(&self, key: &CacheKey) -> Option<Arc<Mutex<CacheState>>> {
        self.states.lock().unwrap().get(key).cloned()
    }

    pub fn remove_device(&self, device_id: &str) {
        self.states.lock().unwrap().retain(|k, _| k.device_id != device_id);
    }

    pub fn metrics_rows(&self) -> Vec<MetricsRow> {
        let states: Vec<_> = self.states.lock().unwrap().values().cloned().collect();
        states.iter().map(|s| s.lock().unwrap().metrics_row()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    #[serde(rename = "deviceId")]
    pub device_id: String,
    pub property: String,
    pub model: String,
    pub delta_ms: Option<Millis>,
    pub error_tol: Option<f64>,
    pub lookups: u64,
    pub hits: u64,
    pub reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorSample {
    #[serde(rename = "deviceId")]
    pub device_id: String,
    pub property: String,
    pub model: String,
    pub delta_ms: Option<Millis>,
    pub time_ms: Millis,
    pub error: f64,
}

pub fn write_metrics_csv<W: Write>(out: W, rows: &[MetricsRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(["deviceId", "property", "model", "delta_ms", "error_tol", "lookups", "hits", "reduction"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_error_samples_csv<W: Write>(out: W, rows: &[ErrorSample]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(["deviceId", "property", "model", "delta_ms", "time_ms", "error"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
