//! Membership state shared by the node roles. Nothing here does I/O except
//! the leader-list store.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ClusterError;
use crate::Millis;

pub const HEARTBEAT_INTERVAL_MS: Millis = 1_000;
pub const MISS_THRESHOLD: u64 = 3;
pub const REFRESH_INTERVAL_MS: Millis = 5_000;
pub const DAEMON_INTERVAL_MS: Millis = 1_000;
pub const DEFAULT_THRESHOLD: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NodeAddr {
    pub node_id: String,
    pub address: String,
}

impl NodeAddr {
    pub fn new(node_id: impl Into<String>, address: impl Into<String>) -> Self {
        Self {
            node_id: node_id.into(),
            address: address.into(),
        }
    }
}

/// `nodeId host:port` per line; blank lines and `#` comments are skipped.
pub fn parse_bootstrap(text: &str) -> Result<Vec<NodeAddr>, ClusterError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(id), Some(addr), None) if addr.contains(':') => out.push(NodeAddr::new(id, addr)),
            _ => {
                return Err(ClusterError::BadBootstrap {
                    line: i + 1,
                    text: raw.to_string(),
                })
            }
        }
    }
    Ok(out)
}

pub fn render_bootstrap(nodes: &[NodeAddr]) -> String {
    nodes.iter().map(|n| format!("{} {}\n", n.node_id, n.address)).collect()
}

/// target = max(minLeaders, ceil(edges / t))
pub fn scaler_target(min_leaders: usize, edge_count: usize, threshold: usize) -> usize {
    min_leaders.max(edge_count.div_ceil(threshold.max(1)))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LeaderList {
    pub version: u64,
    pub active_leaders: Vec<NodeAddr>,
    pub potential_leaders: Vec<NodeAddr>,
    pub target: usize,
}

impl LeaderList {
    pub fn is_active(&self, id: &str) -> bool {
        self.active_leaders.iter().any(|n| n.node_id == id)
    }

    pub fn is_potential(&self, id: &str) -> bool {
        self.potential_leaders.iter().any(|n| n.node_id == id)
    }

    pub fn active(&self, id: &str) -> Option<&NodeAddr> {
        self.active_leaders.iter().find(|n| n.node_id == id)
    }

    /// Appends to the active list (promotion order). Returns whether the list changed.
    pub fn add_active(&mut self, node: NodeAddr) -> bool {
        let before = (self.active_leaders.clone(), self.potential_leaders.len());
        self.potential_leaders.retain(|n| n.node_id != node.node_id);
        match self.active_leaders.iter_mut().find(|n| n.node_id == node.node_id) {
            Some(existing) => existing.address = node.address,
            None => self.active_leaders.push(node),
        }
        self.bump_if(before != (self.active_leaders.clone(), self.potential_leaders.len()))
    }

    pub fn add_potential(&mut self, node: NodeAddr) -> bool {
        if self.is_active(&node.node_id) {
            return false;
        }
        let changed = match self.potential_leaders.iter_mut().find(|n| n.node_id == node.node_id) {
            Some(existing) if existing.address == node.address => false,
            Some(existing) => {
                existing.address = node.address;
                true
            }
            None => {
                self.potential_leaders.push(node);
                true
            }
        };
        self.bump_if(changed)
    }

    /// Drops `id` from both lists.
    pub fn remove(&mut self, id: &str) -> bool {
        let before = self.active_leaders.len() + self.potential_leaders.len();
        self.active_leaders.retain(|n| n.node_id != id);
        self.potential_leaders.retain(|n| n.node_id != id);
        self.bump_if(before != self.active_leaders.len() + self.potential_leaders.len())
    }

    pub fn set_target(&mut self, target: usize) -> bool {
        let changed = self.target != target;
        self.target = target;
        self.bump_if(changed)
    }

    fn bump_if(&mut self, changed: bool) -> bool {
        if changed {
            self.version += 1;
        }
        changed
    }

    /// Binary tree in promotion order: leader i hangs under the first
    /// earlier leader holding fewer than two children, i.e. (i-1)/2.
    pub fn tree_parent(&self, id: &str) -> Option<&NodeAddr> {
        let i = self.active_leaders.iter().position(|n| n.node_id == id)?;
        (i > 0).then(|| &self.active_leaders[(i - 1) / 2])
    }

    pub fn tree_neighbors(&self, id: &str) -> Vec<NodeAddr> {
        let Some(i) = self.active_leaders.iter().position(|n| n.node_id == id) else {
            return Vec::new();
        };
        let n = self.active_leaders.len();
        let mut out = Vec::new();
        if i > 0 {
            out.push(self.active_leaders[(i - 1) / 2].clone());
        }
        for c in [2 * i + 1, 2 * i + 2] {
            if c < n {
                out.push(self.active_leaders[c].clone());
            }
        }
        out
    }

    /// Longest path, in edges, of the leader tree.
    pub fn diameter(&self) -> usize {
        let n = self.active_leaders.len();
        if n < 2 {
            return 0;
        }
        let adjacency = |i: usize| {
            let mut v = Vec::new();
            if i > 0 {
                v.push((i - 1) / 2);
            }
            v.extend([2 * i + 1, 2 * i + 2].into_iter().filter(|&c| c < n));
            v
        };
        let bfs = |start: usize| {
            let mut dist = vec![usize::MAX; n];
            dist[start] = 0;
            let mut q = VecDeque::from([start]);
            while let Some(u) = q.pop_front() {
                for v in adjacency(u) {
                    if dist[v] == usize::MAX {
                        dist[v] = dist[u] + 1;
                        q.push_back(v);
                    }
                }
            }
            let far = (0..n).max_by_key(|&i| (dist[i], std::cmp::Reverse(i))).unwrap();
            (far, dist[far])
        };
        let (far, _) = bfs(0);
        bfs(far).1
    }
}

/// Append-only JSON-lines log of every list version. The last line wins on load.
#[derive(Debug, Clone)]
pub struct LeaderStore {
    path: Option<PathBuf>,
}

impl LeaderStore {
    pub fn memory() -> Self {
        Self { path: None }
    }

    pub fn file(path: impl Into<PathBuf>) -> Self {
        Self { path: Some(path.into()) }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn load(&self) -> Result<LeaderList, ClusterError> {
        let Some(path) = &self.path else {
            return Ok(LeaderList::default());
        };
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(LeaderList::default()),
            Err(e) => return Err(ClusterError::Store(e.to_string())),
        };
        // a torn final line from a crash is ignored
        Ok(text
            .lines()
            .filter_map(|l| serde_json::from_str::<LeaderList>(l).ok())
            .max_by_key(|l| l.version)
            .unwrap_or_default())
    }

    pub fn append(&self, list: &LeaderList) -> Result<(), ClusterError> {
        let Some(path) = &self.path else { return Ok(()) };
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| ClusterError::Store(e.to_string()))?;
        let mut line = serde_json::to_string(list).map_err(|e| ClusterError::Store(e.to_string()))?;
        line.push('\n');
        f.write_all(line.as_bytes())
            .and_then(|_| f.sync_data())
            .map_err(|e| ClusterError::Store(e.to_string()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DaemonOutcome {
    pub promoted: Vec<String>,
    pub failed: Vec<String>,
    /// Leaders still missing after the potential list ran dry.
    pub deficit: usize,
}

/// Promotes potential leaders, in list order, until the active count
/// reaches the target. Candidates whose promotion fails are dropped.
pub fn daemon_tick(list: &mut LeaderList, mut promote: impl FnMut(&NodeAddr) -> bool) -> DaemonOutcome {
    let mut out = DaemonOutcome::default();
    while list.active_leaders.len() < list.target && !list.potential_leaders.is_empty() {
        let candidate = list.potential_leaders[0].clone();
        if promote(&candidate) {
            list.add_active(candidate.clone());
            out.promoted.push(candidate.node_id);
        } else {
            list.remove(&candidate.node_id);
            out.failed.push(candidate.node_id);
        }
    }
    out.deficit = list.target.saturating_sub(list.active_leaders.len());
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EdgeEntry {
    pub address: String,
    pub last_heartbeat: Millis,
    pub device_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PeerEntry {
    pub address: String,
    pub last_heartbeat: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "nodeId", rename_all = "camelCase")]
pub enum Failure {
    Edge(String),
    Leader(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Reassignment {
    pub moves: BTreeMap<String, String>,
    pub orphaned: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClusterView {
    pub threshold: usize,
    pub edges: BTreeMap<String, EdgeEntry>,
    pub peer_leaders: BTreeMap<String, PeerEntry>,
    pub device_assignment: BTreeMap<String, String>,
    pub orphans: BTreeSet<String>,
}

impl ClusterView {
    pub fn new(threshold: usize) -> Self {
        Self {
            threshold,
            edges: BTreeMap::new(),
            peer_leaders: BTreeMap::new(),
            device_assignment: BTreeMap::new(),
            orphans: BTreeSet::new(),
        }
    }

    pub fn is_full(&self) -> bool {
        self.edges.len() >= self.threshold
    }

    /// Admits a new edge or refreshes a known one. A new edge is refused
    /// once the view holds `threshold` edges.
    pub fn join(&mut self, edge: &str, address: &str, devices: &[String], now: Millis) -> Result<(), ClusterError> {
        if !self.edges.contains_key(edge) && self.is_full() {
            return Err(ClusterError::ThresholdFull);
        }
        self.edges.insert(
            edge.to_string(),
            EdgeEntry {
                address: address.to_string(),
                last_heartbeat: now,
                device_ids: BTreeSet::new(),
            },
        );
        self.register_devices(edge, devices);
        debug_assert!(self.edges.len() <= self.threshold);
        Ok(())
    }

    /// Replaces the device set reported by `edge`.
    pub fn register_devices(&mut self, edge: &str, devices: &[String]) {
        let Some(entry) = self.edges.get_mut(edge) else { return };
        for old in std::mem::take(&mut entry.device_ids) {
            if self.device_assignment.get(&old).map(String::as_str) == Some(edge) {
                self.device_assignment.remove(&old);
            }
        }
        for d in devices {
            // a device reported by two edges belongs to the latest reporter
            if let Some(prev) = self.device_assignment.insert(d.clone(), edge.to_string()) {
                if prev != edge {
                    if let Some(e) = self.edges.get_mut(&prev) {
                        e.device_ids.remove(d);
                    }
                }
            }
            self.orphans.remove(d);
        }
        if let Some(entry) = self.edges.get_mut(edge) {
            entry.device_ids = devices.iter().cloned().collect();
        }
    }

    pub fn leave(&mut self, edge: &str) -> Option<EdgeEntry> {
        let entry = self.edges.remove(edge)?;
        for d in &entry.device_ids {
            if self.device_assignment.get(d).map(String::as_str) == Some(edge) {
                self.device_assignment.remove(d);
            }
        }
        Some(entry)
    }

    /// Records an edge heartbeat; false if the edge is not a member.
    pub fn heartbeat(&mut self, edge: &str, now: Millis) -> bool {
        match self.edges.get_mut(edge) {
            Some(e) => {
                e.last_heartbeat = e.last_heartbeat.max(now);
                true
            }
            None => false,
        }
    }

    pub fn peer_heartbeat(&mut self, leader: &str, address: &str, now: Millis) {
        let e = self.peer_leaders.entry(leader.to_string()).or_insert(PeerEntry {
            address: address.to_string(),
            last_heartbeat: now,
        });
        e.address = address.to_string();
        e.last_heartbeat = e.last_heartbeat.max(now);
    }

    /// Keeps peer entries for exactly `peers`, new ones starting fresh at `now`.
    pub fn set_peers(&mut self, peers: &[NodeAddr], now: Millis) {
        self.peer_leaders.retain(|id, _| peers.iter().any(|p| &p.node_id == id));
        for p in peers {
            self.peer_leaders
                .entry(p.node_id.clone())
                .and_modify(|e| e.address = p.address.clone())
                .or_insert(PeerEntry {
                    address: p.address.clone(),
                    last_heartbeat: now,
                });
        }
    }

    /// Peers silent for more than `misses` intervals. Failed leader peers
    /// are removed from the view; failed edges stay until failed over.
    pub fn heartbeat_tick(&mut self, now: Millis, interval: Millis, misses: u64) -> Vec<Failure> {
        let limit = interval * misses;
        let mut out: Vec<Failure> = self
            .edges
            .iter()
            .filter(|(_, e)| now.saturating_sub(e.last_heartbeat) > limit)
            .map(|(id, _)| Failure::Edge(id.clone()))
            .collect();
        let dead: Vec<String> = self
            .peer_leaders
            .iter()
            .filter(|(_, p)| now.saturating_sub(p.last_heartbeat) > limit)
            .map(|(id, _)| id.clone())
            .collect();
        for id in dead {
            self.peer_leaders.remove(&id);
            out.push(Failure::Leader(id));
        }
        out
    }

    /// Moves every device of `failed` to the least-loaded survivor (ties by
    /// edge id). With no survivor the devices become orphans.
    pub fn failover_devices(&mut self, failed: &str) -> Reassignment {
        let Some(entry) = self.leave(failed) else {
            return Reassignment::default();
        };
        let devices: Vec<String> = entry.device_ids.into_iter().collect();
        let target = self
            .edges
            .iter()
            .min_by(|a, b| a.1.device_ids.len().cmp(&b.1.device_ids.len()).then(a.0.cmp(b.0)))
            .map(|(id, _)| id.clone());
        let mut out = Reassignment::default();
        match target {
            Some(t) => {
                let e = self.edges.get_mut(&t).expect("target exists");
                for d in devices {
                    e.device_ids.insert(d.clone());
                    self.device_assignment.insert(d.clone(), t.clone());
                    out.moves.insert(d, t.clone());
                }
            }
            None => {
                self.orphans.extend(devices.iter().cloned());
                out.orphaned = devices;
            }
        }
        out
    }

    pub fn edge_of(&self, device: &str) -> Option<&str> {
        self.device_assignment.get(device).map(String::as_str)
    }

    pub fn device_count(&self, edge: &str) -> usize {
        self.edges.get(edge).map_or(0, |e| e.device_ids.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Candidate {
    pub leader_id: String,
    pub address: String,
    pub rtt_ms: f64,
    pub measured_at: Millis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinAttempt {
    Accepted,
    Rejected,
    Unreachable,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EdgeLeaderCache {
    pub candidates: Vec<Candidate>,
    pub current_leader: Option<NodeAddr>,
    pub list_version: u64,
    pub refreshed_at: Millis,
}

impl EdgeLeaderCache {
    /// Installs freshly measured candidates unless `version` is older than
    /// what the cache already mirrors. Returns whether it was installed.
    pub fn refresh(&mut self, version: u64, mut measured: Vec<Candidate>, now: Millis) -> bool {
        if version < self.list_version {
            return false;
        }
        measured.sort_by(|a, b| a.rtt_ms.total_cmp(&b.rtt_ms).then_with(|| a.leader_id.cmp(&b.leader_id)));
        self.candidates = measured;
        self.list_version = version;
        self.refreshed_at = now;
        true
    }

    pub fn refresh_due(&self, now: Millis) -> bool {
        now >= self.refreshed_at + REFRESH_INTERVAL_MS
    }

    /// Tries candidates by ascending RTT, skipping `exclude`, and joins the
    /// first that accepts.
    pub fn join(
        &mut self,
        exclude: &[&str],
        mut attempt: impl FnMut(&Candidate) -> JoinAttempt,
    ) -> Result<NodeAddr, ClusterError> {
        for c in &self.candidates {
            if exclude.contains(&c.leader_id.as_str()) {
                continue;
            }
            if attempt(c) == JoinAttempt::Accepted {
                let leader = NodeAddr::new(c.leader_id.clone(), c.address.clone());
                self.current_leader = Some(leader.clone());
                return Ok(leader);
            }
        }
        self.current_leader = None;
        Err(ClusterError::NoLeaderAvailable)
    }
}

/// Bounded memory of propagation ids already handled.
#[derive(Debug, Clone)]
pub struct SeenIds {
    set: HashSet<String>,
    order: VecDeque<String>,
    cap: usize,
}

impl SeenIds {
    pub fn new(cap: usize) -> Self {
        Self {
            set: HashSet::new(),
            order: VecDeque::new(),
            cap: cap.max(1),
        }
    }

    /// True the first time an id is seen.
    pub fn insert(&mut self, id: &str) -> bool {
        if !self.set.insert(id.to_string()) {
            return false;
        }
        self.order.push_back(id.to_string());
        if self.order.len() > self.cap {
            if let Some(old) = self.order.pop_front() {
                self.set.remove(&old);
            }
        }
        true
    }
}

pub fn new_propagation_id() -> String {
    use rand::RngCore;
    let mut b = [0u8; 16];
    rand::rngs::OsRng.fill_bytes(&mut b);
    b.iter().map(|x| format!("{x:02x}")).collect()
}
