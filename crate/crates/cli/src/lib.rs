//! Shared pieces of the command-line tools: output tables, REPL command
//! parsing and flag parsing helpers.

use std::collections::BTreeMap;

use constellation_core::cluster::ClientReply;
use constellation_core::runtime::{Outcome, Submission, TaskInfo, TaskResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Table,
    Csv,
}

/// Header plus rows; every row has the header's width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Table => self.to_text(),
        }
    }

    fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}", w = *w))
                .collect();
            padded.join(" | ").trim_end().to_string()
        };
        let mut out = line(&self.header);
        out.push('\n');
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        out.push_str(&rule.join("-+-"));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }
}

pub fn outcome_text(outcome: &Outcome) -> String {
    match outcome {
        Outcome::Value(v) => v.to_string(),
        Outcome::Ack => "ack".into(),
        Outcome::Blocked => "blocked".into(),
        Outcome::Error(e) => format!("error: {e}"),
    }
}

pub fn result_table(result: &TaskResult) -> Table {
    let mut t = Table::new(&["task", "time", "device", "outcome", "served_by", "latency_ms"]);
    for d in &result.per_device {
        t.push(vec![
            result.task_id.clone(),
            result.time.to_string(),
            d.device_id.clone(),
            outcome_text(&d.outcome),
            d.served_by.map(|s| s.as_str().to_string()).unwrap_or_default(),
            d.latency_ms.to_string(),
        ]);
    }
    t
}

pub fn tasks_table(tasks: &[TaskInfo]) -> Table {
    let mut t = Table::new(&["task", "client", "kind", "period_ms", "status", "fires", "next_fire"]);
    for task in tasks {
        t.push(vec![
            task.task_id.clone(),
            task.client_id.clone(),
            task.kind.as_str().to_string(),
            task.period.to_string(),
            format!("{:?}", task.status),
            task.fires.to_string(),
            task.next_fire.to_string(),
        ]);
    }
    t
}

/// Renders a statement reply. Errors keep their class and offset so scripts
/// can match on them.
pub fn render_reply(reply: &ClientReply, format: Format) -> String {
    let table = match reply {
        ClientReply::Error(e) => {
            let mut t = Table::new(&["error", "offset", "message"]);
            t.push(vec![
                e.class.clone(),
                e.offset.map(|o| o.to_string()).unwrap_or_default(),
                e.message.clone(),
            ]);
            t
        }
        ClientReply::Ok { submission } => match submission {
            Submission::Result { result } => {
                let mut t = result_table(result);
                if result.short {
                    t.push(note_row(t.header.len(), "short: fewer devices than requested"));
                }
                t
            }
            Submission::Found { devset } => {
                let mut t = Table::new(&["devset", "devtype", "device"]);
                for m in &devset.members {
                    t.push(vec![devset.name.clone(), devset.devtype.clone(), m.clone()]);
                }
                t
            }
            Submission::Scheduled { task_id } => single("scheduled", task_id),
            Submission::Ack { message } => single("ok", message),
            Submission::Imported { devices } => {
                let mut t = Table::new(&["imported"]);
                for d in devices {
                    t.push(vec![d.clone()]);
                }
                t
            }
        },
    };
    table.render(format)
}

fn single(header: &str, value: &str) -> Table {
    let mut t = Table::new(&[header]);
    t.push(vec![value.to_string()]);
    t
}

fn note_row(width: usize, note: &str) -> Vec<String> {
    let mut row = vec![String::new(); width];
    row[0] = note.to_string();
    row
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplCommand {
    Empty,
    Connect(String),
    Close,
    Tasks,
    Results,
    Help,
    Quit,
    Statement(String),
}

/// Backslash commands are case-sensitive; anything else is a statement.
pub fn parse_repl_line(line: &str) -> Result<ReplCommand, String> {
    let line = line.trim();
    if line.is_empty() || line.starts_with("--") {
        return Ok(ReplCommand::Empty);
    }
    let Some(cmd) = line.strip_prefix('\\') else {
        return Ok(ReplCommand::Statement(line.trim_end_matches(';').trim_end().to_string()));
    };
    let mut parts = cmd.split_whitespace();
    let name = parts.next().unwrap_or("");
    let args: Vec<&str> = parts.collect();
    let no_args = |c: ReplCommand| {
        if args.is_empty() {
            Ok(c)
        } else {
            Err(format!("\\{name} takes no arguments"))
        }
    };
    match name {
        "connect" | "c" => match args.as_slice() {
            [addr] => Ok(ReplCommand::Connect(addr.to_string())),
            _ => Err("usage: \\connect host:port".into()),
        },
        "close" => no_args(ReplCommand::Close),
        "tasks" => no_args(ReplCommand::Tasks),
        "results" => no_args(ReplCommand::Results),
        "help" | "?" => no_args(ReplCommand::Help),
        "quit" | "q" => no_args(ReplCommand::Quit),
        other => Err(format!("unknown command \\{other}; try \\help")),
    }
}

pub const REPL_HELP: &str = "\
\\connect host:port   open an authenticated session to a node
\\close               cancel this client's tasks and disconnect
\\tasks               list this client's tasks on the node
\\results             print periodic results received so far
\\help                this text
\\quit                leave
Any other line is sent as a CQL statement.";

/// `L1=5,L2=10`: extra milliseconds added to measured RTT per leader.
pub fn parse_rtt_bias(text: &str) -> Result<BTreeMap<String, f64>, String> {
    let mut out = BTreeMap::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (id, ms) = item
            .split_once('=')
            .ok_or_else(|| format!("expected leader=ms, got {item:?}"))?;
        let ms: f64 = ms.trim().parse().map_err(|_| format!("bad milliseconds in {item:?}"))?;
        if !ms.is_finite() || ms < 0.0 {
            return Err(format!("negative or non-finite bias in {item:?}"));
        }
        out.insert(id.trim().to_string(), ms);
    }
    Ok(out)
}
