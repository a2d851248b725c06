//! `.scn` cluster scenarios: parsing, process orchestration and assertions.
//!
//! ```text
//! name kill-edge
//! seed 7
//! step 100                  # simulated ms per clock step
//! duration 20000
//! threshold 8
//! min-leaders 2
//! recovery 5000             # liveness window after a fault
//! registry R
//! leader L1
//! edge E4 potential
//! device T1 Thermometer on E1 location=lab
//! link E1 L1 5              # fixed RTT bias in ms
//! client c1 on E2
//! at 3000 kill E1
//! at 9000 start E1
//! at 4000 snapshot
//! at 1000 query c1 SENSE Temperature FROM Thermometer
//! at 1000 policy c1 SET POLICY ...
//! every 500 from 1000 to 20000 query c1 SENSE Temperature FROM Thermometer
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::HarnessError;
use crate::client::Connection;
use crate::cluster::{
    render_bootstrap, rpc, ClientReply, ClockMsg, ClusterEvent, Message, MsgType, NodeAddr, NodeSnapshot, Role,
    DAEMON_INTERVAL_MS, DEFAULT_THRESHOLD,
};
use crate::device::load_manifest;
use crate::privacy::Keystore;
use crate::runtime::Submission;
use crate::Millis;

const COORDINATOR: &str = "coordinator";
const RPC_TIMEOUT: Duration = Duration::from_secs(5);
const READY_TIMEOUT: Duration = Duration::from_secs(15);
const WALL_LIMIT: Duration = Duration::from_secs(180);

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDecl {
    pub id: String,
    pub potential: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceDecl {
    pub id: String,
    pub devtype: String,
    pub edge: String,
    pub attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientDecl {
    pub id: String,
    pub node: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Kill(String),
    Start(String),
    Query { client: String, text: String },
    Policy { client: String, text: String },
    Snapshot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledAction {
    pub at: Millis,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub step: Millis,
    pub duration: Millis,
    pub threshold: usize,
    pub min_leaders: usize,
    pub recovery: Millis,
    pub registry: String,
    pub leaders: Vec<String>,
    pub edges: Vec<EdgeDecl>,
    pub devices: Vec<DeviceDecl>,
    /// edge → (leader → bias ms)
    pub links: BTreeMap<String, BTreeMap<String, f64>>,
    pub clients: Vec<ClientDecl>,
    /// Sorted by time; ties keep file order.
    pub schedule: Vec<ScheduledAction>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            seed: 0,
            step: 100,
            duration: 10_000,
            threshold: DEFAULT_THRESHOLD,
            min_leaders: 1,
            recovery: 5_000,
            registry: String::new(),
            leaders: Vec::new(),
            edges: Vec::new(),
            devices: Vec::new(),
            links: BTreeMap::new(),
            clients: Vec::new(),
            schedule: Vec::new(),
        }
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut s = Scenario::default();
        let mut sched = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |m: String| HarnessError::Scenario {
                line: line_no,
                message: m,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            let num = |t: Option<&&str>, what: &str| -> Result<u64, HarnessError> {
                t.and_then(|t| t.parse().ok())
                    .ok_or_else(|| err(format!("{what} expects a nonnegative integer")))
            };
            match tok[0] {
                "name" => s.name = tok.get(1).ok_or_else(|| err("name expects a value".into()))?.to_string(),
                "seed" => s.seed = num(tok.get(1), "seed")?,
                "step" => s.step = num(tok.get(1), "step")?,
                "duration" => s.duration = num(tok.get(1), "duration")?,
                "threshold" => s.threshold = num(tok.get(1), "threshold")? as usize,
                "min-leaders" => s.min_leaders = num(tok.get(1), "min-leaders")? as usize,
                "recovery" => s.recovery = num(tok.get(1), "recovery")?,
                "registry" => {
                    if !s.registry.is_empty() {
                        return Err(err("only one registry is supported".into()));
                    }
                    s.registry = tok.get(1).ok_or_else(|| err("registry expects an id".into()))?.to_string();
                }
                "leader" => s.leaders.push(tok.get(1).ok_or_else(|| err("leader expects an id".into()))?.to_string()),
                "edge" => {
                    let id = tok.get(1).ok_or_else(|| err("edge expects an id".into()))?.to_string();
                    let potential = match tok.get(2) {
                        None => false,
                        Some(&"potential") => true,
                        Some(t) => return Err(err(format!("unexpected '{t}'"))),
                    };
                    s.edges.push(EdgeDecl { id, potential });
                }
                "device" => {
                    if tok.len() < 5 || tok[3] != "on" {
                        return Err(err("expected: device <id> <devtype> on <edge> [key=value...]".into()));
                    }
                    let mut attributes = BTreeMap::new();
                    for kv in &tok[5..] {
                        let (k, v) = kv.split_once('=').ok_or_else(|| err(format!("bad attribute '{kv}'")))?;
                        attributes.insert(k.to_string(), v.to_string());
                    }
                    s.devices.push(DeviceDecl {
                        id: tok[1].into(),
                        devtype: tok[2].into(),
                        edge: tok[4].into(),
                        attributes,
                    });
                }
                "link" => {
                    if tok.len() != 4 {
                        return Err(err("expected: link <edge> <leader> <ms>".into()));
                    }
                    let ms: f64 = tok[3].parse().map_err(|_| err("link delay must be a number".into()))?;
                    s.links.entry(tok[1].into()).or_default().insert(tok[2].into(), ms);
                }
                "client" => {
                    if tok.len() != 4 || tok[2] != "on" {
                        return Err(err("expected: client <id> on <node>".into()));
                    }
                    s.clients.push(ClientDecl {
                        id: tok[1].into(),
                        node: tok[3].into(),
                    });
                }
                "at" => {
                    let at = num(tok.get(1), "at")?;
                    let rest: Vec<&str> = line.splitn(3, char::is_whitespace).collect();
                    let action = parse_action(rest.get(2).copied().unwrap_or("").trim()).map_err(err)?;
                    sched.push(ScheduledAction { at, action });
                }
                "every" => {
                    // every <ms> from <a> to <b> <action>
                    if tok.len() < 7 || tok[2] != "from" || tok[4] != "to" {
                        return Err(err("expected: every <ms> from <a> to <b> <action>".into()));
                    }
                    let every = num(tok.get(1), "every")?;
                    let (from, to) = (num(tok.get(3), "from")?, num(tok.get(5), "to")?);
                    if every == 0 {
                        return Err(err("every expects a positive interval".into()));
                    }
                    let rest: Vec<&str> = line.splitn(7, char::is_whitespace).collect();
                    let action = parse_action(rest.get(6).copied().unwrap_or("").trim()).map_err(err)?;
                    let mut t = from;
                    while t <= to {
                        sched.push(ScheduledAction {
                            at: t,
                            action: action.clone(),
                        });
                        t += every;
                    }
                }
                other => return Err(err(format!("unknown directive '{other}'"))),
            }
        }
        sched.sort_by_key(|a| a.at);
        s.schedule = sched;
        s.validate()?;
        Ok(s)
    }

    fn node_ids(&self) -> Vec<&str> {
        std::iter::once(self.registry.as_str())
            .chain(self.leaders.iter().map(String::as_str))
            .chain(self.edges.iter().map(|e| e.id.as_str()))
            .collect()
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| HarnessError::Scenario { line: 0, message: m };
        if self.registry.is_empty() {
            return Err(bad("a registry is required".into()));
        }
        if self.step == 0 {
            return Err(bad("step must be positive".into()));
        }
        let ids = self.node_ids();
        let unique: BTreeSet<&str> = ids.iter().copied().collect();
        if unique.len() != ids.len() {
            return Err(bad("duplicate node id".into()));
        }
        let edges: BTreeSet<&str> = self.edges.iter().map(|e| e.id.as_str()).collect();
        let mut seen = BTreeSet::new();
        for d in &self.devices {
            if !edges.contains(d.edge.as_str()) {
                return Err(bad(format!("device {} is on unknown edge {}", d.id, d.edge)));
            }
            if !seen.insert(d.id.as_str()) {
                return Err(bad(format!("duplicate device {}", d.id)));
            }
        }
        for (e, links) in &self.links {
            if !edges.contains(e.as_str()) {
                return Err(bad(format!("link from unknown edge {e}")));
            }
            if let Some(l) = links.keys().find(|l| !self.leaders.contains(l) && !edges.contains(l.as_str())) {
                return Err(bad(format!("link to unknown node {l}")));
            }
        }
        let clients: BTreeSet<&str> = self.clients.iter().map(|c| c.id.as_str()).collect();
        for c in &self.clients {
            if !unique.contains(c.node.as_str()) || c.node == self.registry {
                return Err(bad(format!("client {} is on unknown node {}", c.id, c.node)));
            }
        }
        for a in &self.schedule {
            match &a.action {
                Action::Kill(n) | Action::Start(n) if !unique.contains(n.as_str()) => {
                    return Err(bad(format!("unknown node {n} at {}", a.at)));
                }
                Action::Query { client, .. } | Action::Policy { client, .. } if !clients.contains(client.as_str()) => {
                    return Err(bad(format!("unknown client {client} at {}", a.at)));
                }
                _ => {}
            }
            if a.at > self.duration {
                return Err(bad(format!("action at {} is after the duration", a.at)));
            }
        }
        Ok(())
    }

    fn role_of(&self, id: &str) -> Role {
        if id == self.registry {
            Role::Registry
        } else if self.leaders.iter().any(|l| l == id) {
            Role::Leader
        } else {
            Role::Edge
        }
    }

    /// Virtual manifests, one JSON document per declared device.
    pub fn manifests(&self) -> Result<Vec<(DeviceDecl, String)>, HarnessError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.devices
            .iter()
            .map(|d| {
                let start: f64 = rng.gen_range(10.0..30.0);
                let doc = serde_json::json!({
                    "deviceId": d.id,
                    "devtype": d.devtype,
                    "attributes": d.attributes,
                    "properties": [{"name": "Temperature", "datatype": "Double", "units": "C"}],
                    "simulation": {"Temperature": {"kind": "linear", "start": (start * 100.0).round() / 100.0, "slopePerHour": 0.4}},
                });
                let text = serde_json::to_string_pretty(&doc).expect("json value");
                load_manifest(&text).map_err(|e| HarnessError::Scenario {
                    line: 0,
                    message: format!("device {}: {e}", d.id),
                })?;
                Ok((d.clone(), text))
            })
            .collect()
    }
}

fn parse_action(text: &str) -> Result<Action, String> {
    let (verb, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
    let rest = rest.trim();
    match verb {
        "kill" | "start" if !rest.is_empty() && !rest.contains(char::is_whitespace) => Ok(if verb == "kill" {
            Action::Kill(rest.into())
        } else {
            Action::Start(rest.into())
        }),
        "query" | "policy" => {
            let (client, cql) = rest
                .split_once(char::is_whitespace)
                .ok_or_else(|| format!("expected: {verb} <client> <CQL>"))?;
            let (client, text) = (client.to_string(), cql.trim().to_string());
            Ok(if verb == "query" {
                Action::Query { client, text }
            } else {
                Action::Policy { client, text }
            })
        }
        "snapshot" if rest.is_empty() => Ok(Action::Snapshot),
        _ => Err(format!("unknown action '{text}'")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub time: Millis,
    pub client: String,
    pub node: String,
    pub query: String,
    pub ok: bool,
    /// Issued outside every post-fault recovery window.
    pub protected: bool,
    pub served_by: String,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub name: String,
    pub assertions: Vec<Assertion>,
    pub queries: Vec<QueryRecord>,
    pub events: Vec<ClusterEvent>,
    pub snapshots: usize,
    pub wall: Duration,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn assertion(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name == name)
    }

    pub fn render(&self) -> String {
        let mut s = format!("scenario {}\n", self.name);
        for a in &self.assertions {
            let _ = writeln!(s, "{} {} {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
        }
        let ok = self.queries.iter().filter(|q| q.ok).count();
        let _ = writeln!(
            s,
            "queries {} ok {} failed {} snapshots {}",
            self.queries.len(),
            ok,
            self.queries.len() - ok,
            self.snapshots
        );
        let _ = writeln!(s, "result {}", if self.passed() { "PASS" } else { "FAIL" });
        s
    }

    /// `events.log`, `queries.csv` and `report.txt` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir)?;
        let mut ev = String::new();
        for e in &self.events {
            let _ = writeln!(ev, "{}\t{}\t{}\t{}", e.ts, e.node, e.kind, e.detail);
        }
        std::fs::write(dir.join("events.log"), ev)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["time_ms", "client", "node", "ok", "protected", "served_by", "query", "detail"])?;
        for q in &self.queries {
            w.write_record([
                q.time.to_string(),
                q.client.clone(),
                q.node.clone(),
                q.ok.to_string(),
                q.protected.to_string(),
                q.served_by.clone(),
                q.query.clone(),
                q.detail.clone(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.to_string()))?;
        std::fs::write(dir.join("queries.csv"), bytes)?;
        std::fs::write(dir.join("report.txt"), self.render())?;
        Ok(())
    }
}

struct Proc {
    child: Child,
    address: String,
}

struct Runner<'a> {
    scn: &'a Scenario,
    node_bin: &'a Path,
    workdir: PathBuf,
    keystore: Keystore,
    procs: BTreeMap<String, Proc>,
    /// Last known address per node, reused on restart.
    addresses: BTreeMap<String, String>,
    restarted: BTreeSet<String>,
    clients: BTreeMap<String, Connection>,
    events: Vec<ClusterEvent>,
    now: Millis,
    started: Instant,
}

impl Runner<'_> {
    fn check_wall(&self) -> Result<(), HarnessError> {
        if self.started.elapsed() > WALL_LIMIT {
            return Err(HarnessError::ScenarioTimeout(format!(
                "{} exceeded {:?} of wall time at t={}",
                self.scn.name, WALL_LIMIT, self.now
            )));
        }
        Ok(())
    }

    fn spawn(&mut self, id: &str) -> Result<(), HarnessError> {
        let role = self.scn.role_of(id);
        let listen = self.addresses.get(id).cloned().unwrap_or_else(|| "127.0.0.1:0".into());
        let mut cmd = Command::new(self.node_bin);
        cmd.arg("--role")
            .arg(role.as_str())
            .arg("--id")
            .arg(id)
            .arg("--listen")
            .arg(&listen)
            .arg("--threshold")
            .arg(self.scn.threshold.to_string())
            .arg("--keystore")
            .arg(self.keystore.dir())
            .arg("--sim-clock")
            .arg("--trace")
            .arg(self.workdir.join(format!("{id}.trace")));
        match role {
            Role::Registry => {
                cmd.arg("--min-leaders")
                    .arg(self.scn.min_leaders.to_string())
                    .arg("--store")
                    .arg(self.workdir.join("leaders.jsonl"));
            }
            Role::Leader | Role::Edge => {
                let reg = self.addresses.get(&self.scn.registry).cloned().unwrap_or_default();
                cmd.arg("--registry").arg(reg).arg("--bootstrap").arg(self.workdir.join("bootstrap.txt"));
            }
        }
        if role == Role::Edge {
            if self.scn.edges.iter().any(|e| e.id == id && e.potential) {
                cmd.arg("--potential");
            }
            // a restarted edge comes back empty; its devices were failed over
            if !self.restarted.contains(id) {
                let dir = self.workdir.join("devices").join(id);
                if dir.is_dir() {
                    cmd.arg("--devices").arg(dir);
                }
            }
            if let Some(links) = self.scn.links.get(id) {
                let bias: Vec<String> = links.iter().map(|(l, ms)| format!("{l}={ms}")).collect();
                cmd.arg("--rtt-bias").arg(bias.join(","));
            }
        }
        let log = std::fs::File::create(self.workdir.join(format!("{id}.log")))?;
        cmd.stdin(Stdio::null()).stdout(Stdio::piped()).stderr(log);
        let mut child = cmd
            .spawn()
            .map_err(|e| HarnessError::Io(format!("spawn {}: {e}", self.node_bin.display())))?;
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if let Some(rest) = line.strip_prefix("READY ") {
                    let _ = tx.send(rest.to_string());
                }
            }
        });
        let ready = match rx.recv_timeout(READY_TIMEOUT) {
            Ok(r) => r,
            Err(_) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(HarnessError::ScenarioTimeout(format!("{id} did not report READY")));
            }
        };
        let address = ready
            .split_whitespace()
            .nth(1)
            .ok_or_else(|| HarnessError::Other(format!("bad READY line from {id}: {ready}")))?
            .to_string();
        self.addresses.insert(id.to_string(), address.clone());
        self.procs.insert(id.to_string(), Proc { child, address });
        // bring the new process onto the shared clock
        self.clock(id)?;
        Ok(())
    }

    fn send(&self, id: &str, ty: MsgType, payload: impl serde::Serialize) -> Result<Message, HarnessError> {
        let p = self
            .procs
            .get(id)
            .ok_or_else(|| HarnessError::Other(format!("{id} is not running")))?;
        rpc(&p.address, &Message::new(ty, COORDINATOR, payload), RPC_TIMEOUT)
            .map_err(|e| HarnessError::Io(format!("{id}: {e}")))
    }

    fn clock(&self, id: &str) -> Result<(), HarnessError> {
        self.send(id, MsgType::Clock, ClockMsg { now: self.now })?;
        Ok(())
    }

    /// Registry, then leaders, then edges.
    fn clock_all(&self) -> Result<(), HarnessError> {
        for id in self.scn.node_ids() {
            if self.procs.contains_key(id) {
                self.clock(id)?;
            }
        }
        Ok(())
    }

    fn snapshot(&self, id: &str) -> Result<NodeSnapshot, HarnessError> {
        let reply = self.send(id, MsgType::Snapshot, ())?;
        reply.payload().map_err(|e| HarnessError::Other(format!("{id} snapshot: {e}")))
    }

    fn snapshot_all(&self) -> Result<Vec<NodeSnapshot>, HarnessError> {
        self.scn
            .node_ids()
            .into_iter()
            .filter(|id| self.procs.contains_key(*id))
            .map(|id| self.snapshot(id))
            .collect()
    }

    fn kill(&mut self, id: &str) -> Result<(), HarnessError> {
        if let Ok(s) = self.snapshot(id) {
            self.events.extend(s.events);
        }
        if let Some(mut p) = self.procs.remove(id) {
            let _ = p.child.kill();
            let _ = p.child.wait();
        }
        self.restarted.insert(id.to_string());
        let procs = &self.procs;
        self.clients.retain(|_, c| procs.values().any(|p| p.address == c.node_address()));
        Ok(())
    }

    fn connection(&mut self, client: &str) -> Result<&mut Connection, String> {
        let decl = self.scn.clients.iter().find(|c| c.id == client).expect("validated client");
        let addr = self
            .procs
            .get(&decl.node)
            .map(|p| p.address.clone())
            .ok_or_else(|| format!("{} is down", decl.node))?;
        let reconnect = self.clients.get(client).is_none_or(|c| !c.is_open() || c.node_address() != addr);
        if reconnect {
            let key = self.keystore.load_or_generate(client).map_err(|e| e.to_string())?;
            let c = Connection::connect(&addr, client, key).map_err(|e| e.to_string())?;
            self.clients.insert(client.to_string(), c);
        }
        Ok(self.clients.get_mut(client).expect("just inserted"))
    }

    fn issue(&mut self, client: &str, text: &str) -> QueryRecord {
        let node = self
            .scn
            .clients
            .iter()
            .find(|c| c.id == client)
            .map(|c| c.node.clone())
            .unwrap_or_default();
        let mut rec = QueryRecord {
            time: self.now,
            client: client.to_string(),
            node,
            query: text.to_string(),
            ok: false,
            protected: false,
            served_by: String::new(),
            detail: String::new(),
        };
        let reply = match self.connection(client) {
            Ok(c) => c.query(text).map_err(|e| e.to_string()),
            Err(e) => Err(e),
        };
        match reply {
            Err(e) => rec.detail = format!("transport: {e}"),
            Ok(ClientReply::Error(e)) => rec.detail = format!("{}: {}", e.class, e.message),
            Ok(ClientReply::Ok { submission }) => match submission {
                Submission::Result { result } => {
                    let errors: Vec<String> = result
                        .per_device
                        .iter()
                        .filter_map(|d| match &d.outcome {
                            crate::runtime::Outcome::Error(e) => Some(format!("{}: {e}", d.device_id)),
                            _ => None,
                        })
                        .collect();
                    rec.served_by = result
                        .per_device
                        .iter()
                        .map(|d| format!("{}@{}", d.device_id, d.served_by.map_or("-", |s| s.as_str())))
                        .collect::<Vec<_>>()
                        .join(" ");
                    rec.ok = !result.per_device.is_empty() && errors.is_empty() && !result.short;
                    rec.detail = if result.per_device.is_empty() {
                        "no devices".into()
                    } else if result.short {
                        "short devset".into()
                    } else {
                        errors.join("; ")
                    };
                }
                other => {
                    rec.ok = true;
                    rec.detail = format!("{other:?}").chars().take(120).collect();
                }
            },
        }
        rec
    }

    fn teardown(&mut self) {
        for (_, mut c) in std::mem::take(&mut self.clients) {
            c.close();
        }
        let ids: Vec<String> = self.procs.keys().cloned().collect();
        for id in ids {
            let _ = self.send(&id, MsgType::Shutdown, ());
        }
        for (_, mut p) in std::mem::take(&mut self.procs) {
            let deadline = Instant::now() + Duration::from_secs(2);
            while Instant::now() < deadline {
                if let Ok(Some(_)) = p.child.try_wait() {
                    break;
                }
                std::thread::sleep(Duration::from_millis(20));
            }
            let _ = p.child.kill();
            let _ = p.child.wait();
        }
    }
}

impl Drop for Runner<'_> {
    fn drop(&mut self) {
        self.teardown();
    }
}

/// Assignment of declared devices to live hosts.
fn single_assignment(scn: &Scenario, snaps: &[NodeSnapshot]) -> Result<(), String> {
    let mut hosts: BTreeMap<&str, Vec<&str>> = scn.devices.iter().map(|d| (d.id.as_str(), Vec::new())).collect();
    for s in snaps.iter().filter(|s| s.role != Role::Registry) {
        for d in &s.devices {
            if let Some(h) = hosts.get_mut(d.as_str()) {
                h.push(&s.node_id);
            }
        }
    }
    let mut bad: Vec<String> = hosts
        .iter()
        .filter(|(_, h)| h.len() != 1)
        .map(|(d, h)| format!("{d}:[{}]", h.join(",")))
        .collect();
    // each live edge belongs to exactly one live leader, and agrees on which
    let leaders: Vec<&NodeSnapshot> = snaps.iter().filter(|s| s.role == Role::Leader).collect();
    for e in snaps.iter().filter(|s| s.role == Role::Edge) {
        let claimed: Vec<&str> = leaders
            .iter()
            .filter(|l| l.edges.contains(&e.node_id))
            .map(|l| l.node_id.as_str())
            .collect();
        if claimed.len() != 1 || e.leader.as_deref() != claimed.first().copied() {
            bad.push(format!(
                "{} leader={} claimed-by=[{}]",
                e.node_id,
                e.leader.as_deref().unwrap_or("-"),
                claimed.join(",")
            ));
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(bad.join(" "))
    }
}

#[derive(Default)]
struct LeaderWatch {
    leader: String,
    killed_at: Millis,
    detected: Option<Millis>,
    converged: Option<Millis>,
}

/// Spawns real `node_bin` processes for the scenario, drives the simulated
/// clock, and evaluates the cluster assertions. Artifacts land in `workdir`.
pub fn run_cluster_scenario(scn: &Scenario, node_bin: &Path, workdir: &Path) -> Result<ScenarioReport, HarnessError> {
    std::fs::create_dir_all(workdir)?;
    let keystore = Keystore::open(workdir.join("keystore")).map_err(|e| HarnessError::Io(e.to_string()))?;
    for (d, doc) in scn.manifests()? {
        let dir = workdir.join("devices").join(&d.edge);
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join(format!("{}.json", d.id)), doc)?;
    }
    let _ = std::fs::remove_file(workdir.join("leaders.jsonl"));
    let mut r = Runner {
        scn,
        node_bin,
        workdir: workdir.to_path_buf(),
        keystore,
        procs: BTreeMap::new(),
        addresses: BTreeMap::new(),
        restarted: BTreeSet::new(),
        clients: BTreeMap::new(),
        events: Vec::new(),
        now: 0,
        started: Instant::now(),
    };

    r.spawn(&scn.registry)?;
    for l in &scn.leaders {
        r.spawn(l)?;
    }
    let boot: Vec<NodeAddr> = scn
        .leaders
        .iter()
        .map(|l| NodeAddr::new(l.clone(), r.addresses[l].clone()))
        .collect();
    std::fs::write(workdir.join("bootstrap.txt"), render_bootstrap(&boot))?;
    for e in &scn.edges {
        r.spawn(&e.id)?;
    }

    let mut queries = Vec::new();
    let mut faults: Vec<(Millis, Action)> = Vec::new();
    let mut watches: Vec<LeaderWatch> = Vec::new();
    let mut assign_ok = true;
    let mut assign_detail = Vec::new();
    let mut quiescent_checked = 0;
    let mut threshold_viol = Vec::new();
    let mut versions_ok = true;
    let mut last_version = 0u64;
    let mut snapshots = 0;
    let mut next = 0;

    loop {
        r.check_wall()?;
        while next < scn.schedule.len() && scn.schedule[next].at <= r.now {
            let a = scn.schedule[next].action.clone();
            next += 1;
            match &a {
                Action::Kill(id) => {
                    if scn.leaders.contains(id) {
                        watches.push(LeaderWatch {
                            leader: id.clone(),
                            killed_at: r.now,
                            ..LeaderWatch::default()
                        });
                    }
                    r.kill(id)?;
                    faults.push((r.now, a.clone()));
                }
                Action::Start(id) => {
                    if !r.procs.contains_key(id) {
                        r.spawn(id)?;
                    }
                    faults.push((r.now, a.clone()));
                }
                Action::Query { client, text } | Action::Policy { client, text } => {
                    let mut q = r.issue(client, text);
                    q.protected = faults.iter().all(|(f, _)| r.now >= f + scn.recovery);
                    queries.push(q);
                }
                Action::Snapshot => {
                    let snaps = r.snapshot_all()?;
                    snapshots += 1;
                    let quiescent = faults.iter().all(|(f, _)| r.now >= f + scn.recovery);
                    if quiescent {
                        quiescent_checked += 1;
                        if let Err(e) = single_assignment(scn, &snaps) {
                            assign_ok = false;
                            assign_detail.push(format!("t={} {e}", r.now));
                        }
                    }
                    for s in &snaps {
                        if s.role == Role::Leader && s.edge_count > scn.threshold {
                            threshold_viol.push(format!("t={} {} has {} edges", r.now, s.node_id, s.edge_count));
                        }
                        if s.role == Role::Registry {
                            versions_ok &= s.list.version >= last_version;
                            last_version = s.list.version;
                        }
                    }
                }
            }
        }
        if r.now >= scn.duration {
            break;
        }
        r.now = (r.now + scn.step).min(scn.duration);
        r.clock_all()?;

        if watches.iter().any(|w| w.converged.is_none()) && r.procs.contains_key(&scn.registry) {
            let reg = r.snapshot(&scn.registry)?;
            versions_ok &= reg.list.version >= last_version;
            last_version = reg.list.version;
            let mut edges_ok = true;
            for e in &scn.edges {
                if r.procs.contains_key(&e.id) && !reg.list.is_active(&e.id) {
                    let s = r.snapshot(&e.id)?;
                    edges_ok &= s.role != Role::Edge || s.leader.as_ref().is_some_and(|l| reg.list.is_active(l));
                }
            }
            let count_ok = reg.list.active_leaders.len() == reg.list.target;
            for w in watches.iter_mut().filter(|w| w.converged.is_none()) {
                if w.detected.is_none() && !reg.list.is_active(&w.leader) {
                    w.detected = Some(r.now);
                }
                if w.detected.is_some() && edges_ok && count_ok {
                    w.converged = Some(r.now);
                }
            }
        }
    }

    // final quiescent snapshot
    let snaps = r.snapshot_all()?;
    snapshots += 1;
    if faults.iter().all(|(f, _)| r.now >= f + scn.recovery) {
        quiescent_checked += 1;
        if let Err(e) = single_assignment(scn, &snaps) {
            assign_ok = false;
            assign_detail.push(format!("t={} {e}", r.now));
        }
    }
    for s in &snaps {
        if s.role == Role::Leader && s.edge_count > scn.threshold {
            threshold_viol.push(format!("t={} {} has {} edges", r.now, s.node_id, s.edge_count));
        }
        if s.role == Role::Registry {
            versions_ok &= s.list.version >= last_version;
        }
    }
    let mut events = std::mem::take(&mut r.events);
    for s in &snaps {
        events.extend(s.events.iter().cloned());
    }
    events.sort_by(|a, b| (a.ts, &a.node, &a.kind, &a.detail).cmp(&(b.ts, &b.node, &b.kind, &b.detail)));
    events.dedup_by(|a, b| a.ts == b.ts && a.node == b.node && a.kind == b.kind && a.detail == b.detail);
    r.teardown();

    let mut assertions = Vec::new();
    let protected: Vec<&QueryRecord> = queries.iter().filter(|q| q.protected).collect();
    let failed: Vec<String> = protected
        .iter()
        .filter(|q| !q.ok)
        .take(5)
        .map(|q| format!("t={} {} ({})", q.time, q.query, q.detail))
        .collect();
    assertions.push(Assertion {
        name: "liveness".into(),
        passed: failed.is_empty(),
        detail: if failed.is_empty() {
            format!("{} protected queries succeeded", protected.len())
        } else {
            format!("failed: {}", failed.join("; "))
        },
    });

    // failover time per killed edge that hosted devices
    let mut recov = Vec::new();
    let mut recov_ok = true;
    for (at, a) in &faults {
        let Action::Kill(id) = a else { continue };
        let hosted: BTreeSet<&str> = scn.devices.iter().filter(|d| &d.edge == id).map(|d| d.id.as_str()).collect();
        if hosted.is_empty() || scn.role_of(id) != Role::Edge {
            continue;
        }
        let moved: BTreeMap<&str, Millis> = events
            .iter()
            .filter(|e| e.kind == "failover" && e.ts >= *at)
            .filter_map(|e| {
                let (dev, arrow) = e.detail.split_once(' ')?;
                arrow.starts_with(&format!("{id}->")).then_some((dev, e.ts))
            })
            .filter(|(d, _)| hosted.contains(d))
            .collect();
        if moved.len() == hosted.len() {
            let t = moved.values().max().copied().unwrap_or(*at) - at;
            recov_ok &= t <= scn.recovery;
            recov.push(format!("{id}: {t} ms"));
        } else {
            recov_ok = false;
            recov.push(format!("{id}: {} of {} devices failed over", moved.len(), hosted.len()));
        }
    }
    if !recov.is_empty() {
        assertions.push(Assertion {
            name: "recovery".into(),
            passed: recov_ok,
            detail: format!("window {} ms; {}", scn.recovery, recov.join(", ")),
        });
    }
    assertions.push(Assertion {
        name: "single-assignment".into(),
        passed: assign_ok,
        detail: if assign_ok {
            format!("{quiescent_checked} quiescent snapshots")
        } else {
            assign_detail.join("; ")
        },
    });
    for w in &watches {
        let (passed, detail) = match (w.detected, w.converged) {
            (Some(d), Some(c)) => (
                c - d <= 2 * DAEMON_INTERVAL_MS,
                format!(
                    "{} killed at {}, detected at {d}, converged at {c} ({} ms, bound {} ms)",
                    w.leader,
                    w.killed_at,
                    c - d,
                    2 * DAEMON_INTERVAL_MS
                ),
            ),
            (d, _) => (false, format!("{} killed at {}, detected {d:?}, never converged", w.leader, w.killed_at)),
        };
        assertions.push(Assertion {
            name: format!("leader-convergence:{}", w.leader),
            passed,
            detail,
        });
    }
    assertions.push(Assertion {
        name: "threshold".into(),
        passed: threshold_viol.is_empty(),
        detail: if threshold_viol.is_empty() {
            format!("no leader above {}", scn.threshold)
        } else {
            threshold_viol.join("; ")
        },
    });
    assertions.push(Assertion {
        name: "list-version-monotone".into(),
        passed: versions_ok,
        detail: format!("final version {last_version}"),
    });

    Ok(ScenarioReport {
        name: scn.name.clone(),
        assertions,
        queries,
        events,
        snapshots,
        wall: r.started.elapsed(),
    })
}
