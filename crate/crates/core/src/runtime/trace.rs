//! Scheduler trace: one tab-separated line per device outcome.

use std::fmt;
use std::io::Write;
use std::sync::Mutex;

use super::{Outcome, ServedBy, TaskKind};
use crate::Millis;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceLine {
    pub ts: Millis,
    pub task_id: String,
    pub kind: TaskKind,
    pub device_id: String,
    pub served_by: Option<ServedBy>,
    pub latency_ms: Millis,
    pub outcome: String,
}

impl TraceLine {
    pub fn outcome_text(outcome: &Outcome) -> String {
        match outcome {
            Outcome::Value(v) => format!("value={v}"),
            Outcome::Ack => "ack".into(),
            Outcome::Blocked => "blocked".into(),
            Outcome::Error(e) => format!("error={}", e.replace(['\t', '\n'], " ")),
        }
    }

    /// Parses a line produced by `Display`.
    pub fn parse(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 7 {
            return None;
        }
        Some(Self {
            ts: f[0].parse().ok()?,
            task_id: f[1].to_string(),
            kind: TaskKind::parse(f[2])?,
            device_id: f[3].to_string(),
            served_by: ServedBy::parse(f[4]),
            latency_ms: f[5].parse().ok()?,
            outcome: f[6].to_string(),
        })
    }
}

impl fmt::Display for TraceLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.ts,
            self.task_id,
            self.kind.as_str(),
            self.device_id,
            self.served_by.map_or("-", ServedBy::as_str),
            self.latency_ms,
            self.outcome
        )
    }
}

#[derive(Default)]
pub struct Trace {
    lines: Mutex<Vec<TraceLine>>,
    sink: Mutex<Option<Box<dyn Write + Send>>>,
}

impl Trace {
    pub fn set_sink(&self, sink: Box<dyn Write + Send>) {
        *self.sink.lock().unwrap() = Some(sink);
    }

    pub fn push(&self, line: TraceLine) {
        if let Some(w) = self.sink.lock().unwrap().as_mut() {
            let _ = writeln!(w, "{line}");
            let _ = w.flush();
        }
        self.lines.lock().unwrap().push(line);
    }

    pub fn lines(&self) -> Vec<TraceLine> {
        self.lines.lock().unwrap().clone()
    }

    pub fn clear(&self) {
        self.lines.lock().unwrap().clear();
    }
}
