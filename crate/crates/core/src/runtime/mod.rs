//! Task compilation, scheduling and execution on a node.

mod clock;
mod engine;
mod trace;

pub use clock::{Clock, SimClock, WallClock};
pub use engine::{Engine, DEFAULT_OWNER, MAX_EVAL_TICK_MS};
pub use trace::{Trace, TraceLine};

use serde::{Deserialize, Serialize};

use crate::cql::{CqlError, Predicate, Query};
use crate::device::{DevSet, DeviceError};
use crate::privacy::PrivacyError;
use crate::value::Value;
use crate::Millis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    Sense,
    Actuate,
    Event,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Sense => "Sense",
            TaskKind::Actuate => "Actuate",
            TaskKind::Event => "Event",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "Sense" => TaskKind::Sense,
            "Actuate" => TaskKind::Actuate,
            "Event" => TaskKind::Event,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskStatus {
    Active,
    Cancelled,
    Completed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ServedBy {
    Device,
    Cache,
    Gateway,
}

impl ServedBy {
    pub fn as_str(self) -> &'static str {
        match self {
            ServedBy::Device => "Device",
            ServedBy::Cache => "Cache",
            ServedBy::Gateway => "Gateway",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "Device" => ServedBy::Device,
            "Cache" => ServedBy::Cache,
            "Gateway" => ServedBy::Gateway,
            _ => return None,
        })
    }
}

/// Device set as a re-resolvable query: devtype plus predicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub devtype: String,
    pub predicates: Vec<Predicate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub client_id: String,
    pub kind: TaskKind,
    pub query: Query,
    pub target: Target,
    pub devset: DevSet,
    /// 0 for one-shot tasks.
    pub period: Millis,
    /// 0 when no deadline was requested.
    pub deadline: Millis,
    pub start: Millis,
    pub fires: u64,
    pub next_fire: Millis,
    pub status: TaskStatus,
    /// Condition value at the previous evaluation (edge detection).
    pub last_condition: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Value(Value),
    Ack,
    /// Withheld by the privacy mediator; no value is carried.
    Blocked,
    Error(String),
}

impl Outcome {
    pub fn is_error(&self) -> bool {
        matches!(self, Outcome::Error(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeviceOutcome {
    pub device_id: String,
    pub outcome: Outcome,
    pub served_by: Option<ServedBy>,
    pub latency_ms: Millis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskResult {
    pub task_id: String,
    pub time: Millis,
    pub per_device: Vec<DeviceOutcome>,
    pub deadline_met: bool,
    /// Fewer devices were available than the requested cardinality.
    pub short: bool,
}

impl TaskResult {
    pub fn values(&self) -> Vec<&Value> {
        self.per_device
            .iter()
            .filter_map(|d| match &d.outcome {
                Outcome::Value(v) => Some(v),
                _ => None,
            })
            .collect()
    }

    pub fn has_errors(&self) -> bool {
        self.per_device.iter().any(|d| d.outcome.is_error())
    }
}

/// What a submitted statement produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum Submission {
    Found { devset: DevSet },
    Result { result: TaskResult },
    Scheduled { task_id: String },
    Ack { message: String },
    Imported { devices: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskInfo {
    pub task_id: String,
    pub client_id: String,
    pub kind: TaskKind,
    pub period: Millis,
    pub status: TaskStatus,
    pub fires: u64,
    pub next_fire: Millis,
}

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Cql(#[from] CqlError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error("unknown device set {0}")]
    UnknownDevSet(String),
    #[error("gateway import failed: {0}")]
    Gateway(String),
    #[error("unknown task {0}")]
    UnknownTask(String),
}

#[cfg(test)]
mod tests;
