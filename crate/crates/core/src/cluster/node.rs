//! A cluster node: one TCP listener, a thread per connection, and a tick
//! that drives heartbeats, failure detection, the registry daemon and the
//! local task scheduler. Time comes from a [`SimClock`] that is either
//! slaved to the wall clock or set by `CLOCK` messages from a coordinator.

use std::collections::BTreeMap;
use std::fs::File;
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread;
use std::time::{Duration, Instant};

use super::model::*;
use super::proto::*;
use super::wire::{read_frame, rpc, write_frame, Message, MsgType};
use super::ClusterError;
use crate::cql::{parse_query, FindSpec, Query, Trigger};
use crate::device::{DeviceError, DeviceManifest, DeviceRegistry, DriverKind};
use crate::privacy::{Authenticator, Envelope, Keystore, PrivacyError, PublicKey};
use crate::runtime::{
    Clock, DeviceOutcome, Engine, Outcome, RuntimeError, SimClock, Submission, TaskKind, TaskResult,
};
use crate::Millis;

pub const RPC_TIMEOUT: Duration = Duration::from_secs(2);
const PING_TIMEOUT: Duration = Duration::from_millis(500);
/// Registry forgets an edge it has not heard of (directly or via a leader) for this long.
pub const EDGE_TTL_MS: Millis = 10_000;
const WALL_TICK: Duration = Duration::from_millis(100);
const MAX_EVENTS: usize = 4096;

#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub node_id: String,
    pub role: Role,
    pub listen: String,
    pub registry: Option<String>,
    pub bootstrap: Option<PathBuf>,
    pub threshold: usize,
    pub min_leaders: usize,
    /// Edge volunteers for promotion.
    pub potential: bool,
    pub devices: Vec<DeviceManifest>,
    pub keystore: PathBuf,
    /// Registry leader-list log.
    pub store: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    /// Time advances only on coordinator `CLOCK` messages.
    pub sim_clock: bool,
    /// Fixed per-link delay added to measured RTTs, by leader id.
    pub rtt_bias: BTreeMap<String, f64>,
}

impl NodeConfig {
    pub fn new(node_id: &str, role: Role, listen: &str) -> Self {
        Self {
            node_id: node_id.to_string(),
            role,
            listen: listen.to_string(),
            registry: None,
            bootstrap: None,
            threshold: DEFAULT_THRESHOLD,
            min_leaders: 1,
            potential: false,
            devices: Vec::new(),
            keystore: PathBuf::from("keystore"),
            store: None,
            trace: None,
            sim_clock: false,
            rtt_bias: BTreeMap::new(),
        }
    }
}

#[derive(Default)]
struct EdgeState {
    leader: Option<NodeAddr>,
    cache: EdgeLeaderCache,
    last_ack: Millis,
    next_hb: Millis,
    force_refresh: bool,
}

struct LeaderState {
    view: ClusterView,
    manifests: BTreeMap<String, DeviceManifest>,
    list: LeaderList,
    next_hb: Millis,
}

struct RegistryState {
    list: LeaderList,
    store: LeaderStore,
    leader_seen: BTreeMap<String, Millis>,
    edges: BTreeMap<String, Millis>,
    next_daemon: Millis,
}

struct RemoteTask {
    client: String,
    find: Option<FindSpec>,
    query: Query,
    period: Millis,
    start: Millis,
    next_fire: Millis,
    fires: u64,
}

struct State {
    role: Role,
    edge: EdgeState,
    leader: LeaderState,
    registry: RegistryState,
    remote_aliases: BTreeMap<(String, String), FindSpec>,
    remote_tasks: BTreeMap<String, RemoteTask>,
    remote_events: Vec<(String, String)>,
    next_remote: u64,
    events: Vec<ClusterEvent>,
}

struct Session {
    writer: Arc<Mutex<TcpStream>>,
    public: PublicKey,
}

pub struct Node {
    cfg: NodeConfig,
    address: String,
    clock: Arc<SimClock>,
    pub engine: Engine,
    auth: Authenticator,
    state: Mutex<State>,
    sessions: Mutex<BTreeMap<String, Session>>,
    seen: Mutex<SeenIds>,
    tick_lock: Mutex<()>,
    halted: AtomicBool,
    stopped: (Mutex<bool>, Condvar),
    started: Instant,
}

fn io_err(e: impl std::fmt::Display) -> ClusterError {
    ClusterError::Io(e.to_string())
}

/// Errors meaning "the target is not here", which send a statement into the cluster.
fn unresolved(e: &RuntimeError) -> bool {
    matches!(
        e,
        RuntimeError::UnknownDevSet(_)
            | RuntimeError::Device(DeviceError::EmptySet(_))
            | RuntimeError::Device(DeviceError::UnknownDevice(_))
            | RuntimeError::Privacy(PrivacyError::UnknownSensor(_))
    )
}

/// Name a statement addresses, used to find a remote alias and a hosting edge.
fn target_name(q: &Query) -> Option<&str> {
    match q {
        Query::Sense(s) => Some(&s.target),
        Query::Actuate(a) => Some(&a.target),
        Query::Event(e) => match &e.trigger {
            Trigger::Condition { target, .. } => Some(target),
            Trigger::Periodic { .. } => Some(&e.body.target),
        },
        Query::Denature(d) => Some(&d.sensor_id),
        Query::Find(f) => Some(&f.devtype),
        Query::GatewayImport(_) => None,
    }
}

fn one_shot(q: &Query) -> Option<(Query, Millis)> {
    match q {
        Query::Sense(s) if s.period.is_some_and(|p| p > 0) => {
            let mut s = s.clone();
            let p = s.period.take().unwrap();
            Some((Query::Sense(s), p))
        }
        Query::Actuate(a) if a.period.is_some_and(|p| p > 0) => {
            let mut a = a.clone();
            let p = a.period.take().unwrap();
            Some((Query::Actuate(a), p))
        }
        _ => None,
    }
}

impl Node {
    /// Binds, joins the cluster according to the role and starts serving.
    pub fn start(cfg: NodeConfig) -> Result<Arc<Node>, ClusterError> {
        let listener = TcpListener::bind(&cfg.listen).map_err(io_err)?;
        let address = listener.local_addr().map_err(io_err)?.to_string();
        let clock = Arc::new(SimClock::new(0));
        let engine = Engine::with_prefix(clock.clone(), &format!("{}-t", cfg.node_id));
        if let Some(path) = &cfg.trace {
            engine.trace.set_sink(Box::new(File::create(path).map_err(io_err)?));
        }
        for m in &cfg.devices {
            engine.add_device(m.clone()).map_err(|e| ClusterError::Protocol(e.to_string()))?;
        }
        let keystore = Keystore::open(&cfg.keystore).map_err(io_err)?;
        let node_key = keystore.load_or_generate(&cfg.node_id).map_err(io_err)?;
        let store = cfg.store.clone().map(LeaderStore::file).unwrap_or_else(LeaderStore::memory);
        let list = store.load()?;
        let leader_seen = list.active_leaders.iter().map(|n| (n.node_id.clone(), 0)).collect();
        let state = State {
            role: cfg.role,
            edge: EdgeState::default(),
            leader: LeaderState {
                view: ClusterView::new(cfg.threshold),
                manifests: BTreeMap::new(),
                list: LeaderList::default(),
                next_hb: 0,
            },
            registry: RegistryState {
                list,
                store,
                leader_seen,
                edges: BTreeMap::new(),
                next_daemon: 0,
            },
            remote_aliases: BTreeMap::new(),
            remote_tasks: BTreeMap::new(),
            remote_events: Vec::new(),
            next_remote: 1,
            events: Vec::new(),
        };
        let node = Arc::new(Node {
            address,
            clock,
            engine,
            auth: Authenticator::new(node_key, keystore),
            state: Mutex::new(state),
            sessions: Mutex::new(BTreeMap::new()),
            seen: Mutex::new(SeenIds::new(10_000)),
            tick_lock: Mutex::new(()),
            halted: AtomicBool::new(false),
            stopped: (Mutex::new(false), Condvar::new()),
            started: Instant::now(),
            cfg,
        });
        let acceptor = node.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                if acceptor.is_stopped() {
                    break;
                }
                let n = acceptor.clone();
                thread::spawn(move || n.serve(stream));
            }
        });
        match node.cfg.role {
            Role::Registry => node.registry_persist(),
            Role::Leader => node.register_leader(),
            Role::Edge => {
                node.register_edge();
                node.refresh_leaders();
                node.try_join();
            }
        }
        if !node.cfg.sim_clock {
            let n = node.clone();
            thread::spawn(move || loop {
                thread::sleep(WALL_TICK);
                if n.is_stopped() {
                    break;
                }
                if !n.halted.load(Ordering::SeqCst) {
                    n.set_time(n.started.elapsed().as_millis() as Millis);
                }
            });
        }
        Ok(node)
    }

    pub fn id(&self) -> &str {
        &self.cfg.node_id
    }

    pub fn address(&self) -> &str {
        &self.address
    }

    pub fn addr(&self) -> NodeAddr {
        NodeAddr::new(self.cfg.node_id.clone(), self.address.clone())
    }

    pub fn now(&self) -> Millis {
        self.clock.now()
    }

    pub fn role(&self) -> Role {
        self.lock().role
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap()
    }

    fn event(st: &mut State, ts: Millis, node: &str, kind: &str, detail: impl Into<String>) {
        let detail = detail.into();
        log::info!("{node} {ts} {kind} {detail}");
        st.events.push(ClusterEvent {
            ts,
            node: node.to_string(),
            kind: kind.to_string(),
            detail,
        });
        if st.events.len() > MAX_EVENTS {
            st.events.remove(0);
        }
    }

    fn note(&self, kind: &str, detail: impl Into<String>) {
        let now = self.now();
        Self::event(&mut self.lock(), now, &self.cfg.node_id, kind, detail);
    }

    fn msg(&self, ty: MsgType, payload: impl serde::Serialize) -> Message {
        Message::new(ty, &self.cfg.node_id, payload)
    }

    fn call(&self, addr: &str, ty: MsgType, payload: impl serde::Serialize) -> Result<Message, ClusterError> {
        let reply = rpc(addr, &self.msg(ty, payload), RPC_TIMEOUT).map_err(io_err)?;
        match reply.error_text() {
            Some(e) => Err(ClusterError::Protocol(e)),
            None => Ok(reply),
        }
    }

    /// Stops answering anything, as if the process had crashed.
    pub fn halt(&self) {
        self.halted.store(true, Ordering::SeqCst);
    }

    pub fn shutdown(&self) {
        self.halt();
        let (m, cv) = &self.stopped;
        *m.lock().unwrap() = true;
        cv.notify_all();
    }

    fn is_stopped(&self) -> bool {
        *self.stopped.0.lock().unwrap()
    }

    /// Blocks until a `SHUTDOWN` message arrives.
    pub fn wait(&self) {
        let (m, cv) = &self.stopped;
        let mut stopped = m.lock().unwrap();
        while !*stopped {
            stopped = cv.wait(stopped).unwrap();
        }
    }

    /// Advances the clock to `now` (never backwards) and runs one tick.
    pub fn set_time(&self, now: Millis) {
        if self.halted.load(Ordering::SeqCst) {
            return;
        }
        let _serial = self.tick_lock.lock().unwrap();
        if now > self.clock.now() {
            self.clock.set(now);
        }
        self.tick();
    }

    // ---- connection handling ----

    fn serve(self: Arc<Self>, mut stream: TcpStream) {
        let _ = stream.set_nodelay(true);
        loop {
            if self.halted.load(Ordering::SeqCst) {
                return;
            }
            let msg = match read_frame(&mut stream) {
                Ok(Some(m)) => m,
                _ => return,
            };
            if self.halted.load(Ordering::SeqCst) {
                return;
            }
            if msg.ty == MsgType::Hello {
                self.serve_session(stream, msg);
                return;
            }
            let ty = msg.ty;
            let reply = self.handle(msg).unwrap_or_else(|e| Message::error(&self.cfg.node_id, e.to_string()));
            if write_frame(&mut stream, &reply).is_err() {
                return;
            }
            if ty == MsgType::Shutdown {
                self.shutdown();
                return;
            }
        }
    }

    fn handle(&self, msg: Message) -> Result<Message, ClusterError> {
        let bad = |e: std::io::Error| ClusterError::Protocol(e.to_string());
        match msg.ty {
            MsgType::Ping => Ok(self.msg(MsgType::Pong, ())),
            MsgType::Register => self.on_register(msg.payload().map_err(bad)?),
            MsgType::ListReq => self.on_list_req(&msg.sender),
            MsgType::Heartbeat => self.on_heartbeat(msg.payload().map_err(bad)?),
            MsgType::LeaderDown => self.on_leader_down(msg.payload::<NodeAddr>().map_err(bad)?.node_id),
            MsgType::JoinReq => self.on_join(msg.payload().map_err(bad)?),
            MsgType::DeviceRegister => self.on_device_register(msg.payload().map_err(bad)?),
            MsgType::Leave => self.on_leave(&msg.sender),
            MsgType::DeviceFailover => self.on_failover(msg.payload().map_err(bad)?),
            MsgType::Promote => self.on_promote(msg.payload().map_err(bad)?),
            MsgType::QueryFwd => Ok(self.msg(MsgType::QueryResult, self.on_query_fwd(msg.payload().map_err(bad)?))),
            MsgType::Cancel => {
                let client: Hello = msg.payload().map_err(bad)?;
                let n = self.cancel_local(&client.client);
                Ok(self.msg(MsgType::Closed, Closed { cancelled: n }))
            }
            MsgType::Clock => {
                let c: ClockMsg = msg.payload().map_err(bad)?;
                self.set_time(c.now);
                Ok(self.msg(MsgType::ClockAck, ClockMsg { now: self.now() }))
            }
            MsgType::Snapshot => Ok(self.msg(MsgType::Snapshot, self.snapshot())),
            MsgType::Shutdown => Ok(self.msg(MsgType::Ack, ())),
            other => Err(ClusterError::Protocol(format!("unexpected {other:?}"))),
        }
    }

    pub fn snapshot(&self) -> NodeSnapshot {
        let st = self.lock();
        let (leader, edges, orphans, list, edge_count) = match st.role {
            Role::Edge => (
                st.edge.leader.as_ref().map(|l| l.node_id.clone()),
                Vec::new(),
                Vec::new(),
                LeaderList {
                    version: st.edge.cache.list_version,
                    ..LeaderList::default()
                },
                0,
            ),
            Role::Leader => (
                None,
                st.leader.view.edges.keys().cloned().collect(),
                st.leader.view.orphans.iter().cloned().collect(),
                st.leader.list.clone(),
                st.leader.view.edges.len(),
            ),
            Role::Registry => (
                None,
                st.registry.edges.keys().cloned().collect(),
                Vec::new(),
                st.registry.list.clone(),
                st.registry.edges.len(),
            ),
        };
        NodeSnapshot {
            node_id: self.cfg.node_id.clone(),
            role: st.role,
            address: self.address.clone(),
            now: self.now(),
            leader,
            devices: self.engine.registry.ids(),
            edges,
            orphans,
            list,
            edge_count,
            events: st.events.clone(),
        }
    }

    // ---- registry ----

    fn registry_persist(&self) {
        let st = self.lock();
        if let Err(e) = st.registry.store.append(&st.registry.list) {
            log::warn!("leader store: {e}");
        }
    }

    fn list_reply(&self, list: LeaderList) -> Message {
        self.msg(MsgType::LeaderList, list)
    }

    fn on_register(&self, r: Register) -> Result<Message, ClusterError> {
        let now = self.now();
        let mut st = self.lock();
        if st.role != Role::Registry {
            return Err(ClusterError::Protocol("not a registry".into()));
        }
        let changed = match r.role {
            Role::Leader => {
                st.registry.leader_seen.insert(r.node.node_id.clone(), now);
                st.registry.edges.remove(&r.node.node_id);
                st.registry.list.add_active(r.node.clone())
            }
            Role::Edge => {
                st.registry.edges.insert(r.node.node_id.clone(), now);
                r.potential && st.registry.list.add_potential(r.node.clone())
            }
            Role::Registry => false,
        };
        if changed {
            Self::event(&mut st, now, &self.cfg.node_id, "register", format!("{} {}", r.role.as_str(), r.node.node_id));
        }
        let list = st.registry.list.clone();
        drop(st);
        if changed {
            self.registry_persist();
        }
        Ok(self.list_reply(list))
    }

    fn on_list_req(&self, sender: &str) -> Result<Message, ClusterError> {
        let now = self.now();
        let mut st = self.lock();
        if st.role != Role::Registry {
            return Err(ClusterError::Protocol("not a registry".into()));
        }
        if !st.registry.list.is_active(sender) && st.registry.edges.contains_key(sender) {
            st.registry.edges.insert(sender.to_string(), now);
        }
        Ok(self.list_reply(st.registry.list.clone()))
    }

    fn on_leader_down(&self, leader: String) -> Result<Message, ClusterError> {
        let now = self.now();
        let mut st = self.lock();
        if st.role == Role::Registry {
            let seen = st.registry.leader_seen.get(&leader).copied().unwrap_or(0);
            // a peer's report only counts once our own heartbeats are late too
            if now.saturating_sub(seen) > HEARTBEAT_INTERVAL_MS && st.registry.list.remove(&leader) {
                st.registry.leader_seen.remove(&leader);
                Self::event(&mut st, now, &self.cfg.node_id, "leader-down", format!("{leader} reported by peer"));
                drop(st);
                self.registry_persist();
            }
        }
        Ok(self.msg(MsgType::Ack, ()))
    }

    fn registry_tick(&self, now: Millis) {
        let limit = HEARTBEAT_INTERVAL_MS * MISS_THRESHOLD;
        let mut st = self.lock();
        let v0 = st.registry.list.version;
        let dead: Vec<String> = st
            .registry
            .list
            .active_leaders
            .iter()
            .filter(|n| now.saturating_sub(st.registry.leader_seen.get(&n.node_id).copied().unwrap_or(0)) > limit)
            .map(|n| n.node_id.clone())
            .collect();
        for d in dead {
            st.registry.list.remove(&d);
            st.registry.leader_seen.remove(&d);
            Self::event(&mut st, now, &self.cfg.node_id, "leader-down", d);
        }
        st.registry.edges.retain(|_, seen| now.saturating_sub(*seen) <= EDGE_TTL_MS);
        if now < st.registry.next_daemon {
            let changed = st.registry.list.version != v0;
            drop(st);
            if changed {
                self.registry_persist();
            }
            return;
        }
        st.registry.next_daemon = now - now % DAEMON_INTERVAL_MS + DAEMON_INTERVAL_MS;
        let target = scaler_target(self.cfg.min_leaders, st.registry.edges.len(), self.cfg.threshold);
        st.registry.list.set_target(target);
        let mut plan = st.registry.list.clone();
        let before = plan.clone();
        drop(st);

        let outcome = daemon_tick(&mut plan, |cand| {
            let mut l = before.clone();
            l.add_active(cand.clone());
            self.call(&cand.address, MsgType::Promote, Promote { list: l }).is_ok()
        });

        let mut st = self.lock();
        for p in &outcome.promoted {
            if let Some(addr) = before.potential_leaders.iter().find(|n| &n.node_id == p) {
                st.registry.list.add_active(addr.clone());
            }
            st.registry.leader_seen.insert(p.clone(), now);
            st.registry.edges.remove(p);
            Self::event(&mut st, now, &self.cfg.node_id, "promoted", p.clone());
        }
        for f in &outcome.failed {
            st.registry.list.remove(f);
            Self::event(&mut st, now, &self.cfg.node_id, "promotion-failed", f.clone());
        }
        if !outcome.promoted.is_empty() {
            // the edge count shrank by the promoted nodes
            let target = scaler_target(self.cfg.min_leaders, st.registry.edges.len(), self.cfg.threshold);
            st.registry.list.set_target(target);
        }
        let deficit = st.registry.list.target.saturating_sub(st.registry.list.active_leaders.len());
        if deficit > 0 && !outcome.promoted.is_empty() | !outcome.failed.is_empty() {
            Self::event(&mut st, now, &self.cfg.node_id, "deficit", deficit.to_string());
        }
        let changed = st.registry.list.version != v0;
        drop(st);
        if changed {
            self.registry_persist();
        }
    }

    // ---- leader ----

    fn register_leader(&self) {
        let Some(reg) = self.cfg.registry.clone() else { return };
        let r = Register {
            node: self.addr(),
            role: Role::Leader,
            potential: false,
        };
        match self.call(&reg, MsgType::Register, r).and_then(|m| m.payload::<LeaderList>().map_err(io_err)) {
            Ok(list) => self.mirror_list(list),
            Err(e) => self.note("registry-unreachable", e.to_string()),
        }
    }

    fn mirror_list(&self, list: LeaderList) {
        let now = self.now();
        let mut st = self.lock();
        if list.version < st.leader.list.version {
            return;
        }
        let peers = list.tree_neighbors(&self.cfg.node_id);
        st.leader.view.set_peers(&peers, now);
        st.leader.list = list;
    }

    fn on_join(&self, req: JoinReq) -> Result<Message, ClusterError> {
        let now = self.now();
        let mut st = self.lock();
        if st.role != Role::Leader {
            return Ok(self.msg(MsgType::JoinReject, JoinReject { reason: "not a leader".into() }));
        }
        let mut ids: Vec<String> = req.devices.iter().map(|m| m.device_id.clone()).collect();
        let rejoin = st.leader.view.edges.contains_key(&req.edge.node_id);
        if !rejoin && st.leader.view.is_full() {
            Self::event(&mut st, now, &self.cfg.node_id, "join-rejected", req.edge.node_id.clone());
            return Ok(self.msg(MsgType::JoinReject, JoinReject { reason: "threshold full".into() }));
        }
        let adopt: Vec<DeviceManifest> = std::mem::take(&mut st.leader.view.orphans)
            .into_iter()
            .filter_map(|d| st.leader.manifests.get(&d).cloned())
            .collect();
        ids.extend(adopt.iter().map(|m| m.device_id.clone()));
        for m in req.devices.iter().chain(&adopt) {
            st.leader.manifests.insert(m.device_id.clone(), m.clone());
        }
        st.leader.view.join(&req.edge.node_id, &req.edge.address, &ids, now)?;
        assert!(st.leader.view.edges.len() <= st.leader.view.threshold, "threshold exceeded");
        Self::event(&mut st, now, &self.cfg.node_id, "join", req.edge.node_id.clone());
        Ok(self.msg(MsgType::JoinAck, JoinAck { leader: self.addr(), adopt }))
    }

    fn on_device_register(&self, r: DeviceRegister) -> Result<Message, ClusterError> {
        let mut st = self.lock();
        if !st.leader.view.edges.contains_key(&r.edge) {
            return Err(ClusterError::Protocol(format!("{} is not a member", r.edge)));
        }
        let ids: Vec<String> = r.devices.iter().map(|m| m.device_id.clone()).collect();
        for m in r.devices {
            st.leader.manifests.insert(m.device_id.clone(), m);
        }
        st.leader.view.register_devices(&r.edge, &ids);
        Ok(self.msg(MsgType::Ack, ()))
    }

    fn on_leave(&self, edge: &str) -> Result<Message, ClusterError> {
        let now = self.now();
        let mut st = self.lock();
        if let Some(entry) = st.leader.view.leave(edge) {
            for d in entry.device_ids {
                st.leader.manifests.remove(&d);
            }
            Self::event(&mut st, now, &self.cfg.node_id, "leave", edge.to_string());
        }
        Ok(self.msg(MsgType::Ack, ()))
    }

    fn on_heartbeat(&self, hb: Heartbeat) -> Result<Message, ClusterError> {
        let now = self.now();
        let mut st = self.lock();
        let ack = match (st.role, hb) {
            (Role::Leader, Heartbeat::Edge { edge }) => HeartbeatAck {
                known: st.leader.view.heartbeat(&edge, now),
                list: None,
            },
            (Role::Leader, Heartbeat::Leader { leader, .. }) => {
                st.leader.view.peer_heartbeat(&leader.node_id, &leader.address, now);
                HeartbeatAck { known: true, list: None }
            }
            (Role::Registry, Heartbeat::Leader { leader, edges }) => {
                let known = st.registry.list.is_active(&leader.node_id);
                if known {
                    st.registry.leader_seen.insert(leader.node_id.clone(), now);
                    for e in edges {
                        if !st.registry.list.is_active(&e) {
                            st.registry.edges.insert(e, now);
                        }
                    }
                }
                HeartbeatAck {
                    known,
                    list: Some(st.registry.list.clone()),
                }
            }
            _ => HeartbeatAck { known: false, list: None },
        };
        Ok(self.msg(MsgType::Ack, ack))
    }

    fn leader_tick(&self, now: Millis) {
        let mut transfers: Vec<(String, String, DeviceFailover)> = Vec::new();
        let mut dead_peers = Vec::new();
        let (hb_due, edge_ids, peers) = {
            let mut st = self.lock();
            let failures = st.leader.view.heartbeat_tick(now, HEARTBEAT_INTERVAL_MS, MISS_THRESHOLD);
            for f in failures {
                match f {
                    Failure::Edge(e) => {
                        let re = st.leader.view.failover_devices(&e);
                        Self::event(&mut st, now, &self.cfg.node_id, "edge-failed", e.clone());
                        let mut by_target: BTreeMap<String, Vec<DeviceManifest>> = BTreeMap::new();
                        for (d, t) in &re.moves {
                            if let Some(m) = st.leader.manifests.get(d) {
                                by_target.entry(t.clone()).or_default().push(m.clone());
                            }
                            Self::event(&mut st, now, &self.cfg.node_id, "failover", format!("{d} {e}->{t}"));
                        }
                        for d in &re.orphaned {
                            Self::event(&mut st, now, &self.cfg.node_id, "orphaned", d.clone());
                        }
                        for (t, devices) in by_target {
                            let addr = st.leader.view.edges[&t].address.clone();
                            transfers.push((
                                t,
                                addr,
                                DeviceFailover {
                                    failed_edge: e.clone(),
                                    devices,
                                },
                            ));
                        }
                    }
                    Failure::Leader(l) => {
                        Self::event(&mut st, now, &self.cfg.node_id, "peer-failed", l.clone());
                        dead_peers.push(l);
                    }
                }
            }
            let due = now >= st.leader.next_hb;
            if due {
                st.leader.next_hb = now - now % HEARTBEAT_INTERVAL_MS + HEARTBEAT_INTERVAL_MS;
            }
            let peers: Vec<String> = st.leader.view.peer_leaders.values().map(|p| p.address.clone()).collect();
            (due, st.leader.view.edges.keys().cloned().collect::<Vec<_>>(), peers)
        };
        for (edge, addr, payload) in transfers {
            if let Err(e) = self.call(&addr, MsgType::DeviceFailover, payload) {
                self.note("failover-undelivered", format!("{edge}: {e}"));
            }
        }
        let Some(reg) = self.cfg.registry.clone() else { return };
        for l in dead_peers {
            let _ = self.call(&reg, MsgType::LeaderDown, NodeAddr::new(l, ""));
        }
        if !hb_due {
            return;
        }
        let hb = Heartbeat::Leader {
            leader: self.addr(),
            edges: edge_ids,
        };
        match self.call(&reg, MsgType::Heartbeat, &hb).and_then(|m| m.payload::<HeartbeatAck>().map_err(io_err)) {
            Ok(ack) if !ack.known => self.register_leader(),
            Ok(ack) => {
                if let Some(list) = ack.list {
                    self.mirror_list(list);
                }
            }
            Err(_) => {}
        }
        for p in peers {
            let _ = self.call(&p, MsgType::Heartbeat, &hb);
        }
    }

    // ---- edge ----

    fn local_manifests(&self) -> Vec<DeviceManifest> {
        self.engine
            .registry
            .manifests()
            .into_iter()
            .filter(|m| self.engine.registry.driver_kind(&m.device_id) == Some(DriverKind::Virtual))
            .collect()
    }

    fn register_edge(&self) {
        let Some(reg) = self.cfg.registry.clone() else { return };
        let r = Register {
            node: self.addr(),
            role: Role::Edge,
            potential: self.cfg.potential,
        };
        if let Err(e) = self.call(&reg, MsgType::Register, r) {
            self.note("registry-unreachable", e.to_string());
        }
    }

    /// Fetches the leader list (registry, else bootstrap file) and measures
    /// RTT to every listed leader.
    fn refresh_leaders(&self) {
        let now = self.now();
        let fetched = self
            .cfg
            .registry
            .as_ref()
            .ok_or(ClusterError::NoRegistry)
            .and_then(|reg| self.call(reg, MsgType::ListReq, ()))
            .and_then(|m| m.payload::<LeaderList>().map_err(io_err));
        let (version, leaders) = match fetched {
            Ok(list) => (list.version, list.active_leaders),
            Err(e) => {
                let boot = self
                    .cfg
                    .bootstrap
                    .as_ref()
                    .and_then(|p| std::fs::read_to_string(p).ok())
                    .and_then(|t| parse_bootstrap(&t).ok())
                    .unwrap_or_default();
                if boot.is_empty() {
                    self.note("no-leader-source", e.to_string());
                } else {
                    self.note("bootstrap", format!("{} leaders", boot.len()));
                }
                (self.lock().edge.cache.list_version, boot)
            }
        };
        let mut measured = Vec::new();
        for l in leaders.iter().filter(|l| l.node_id != self.cfg.node_id) {
            let t0 = Instant::now();
            if rpc(&l.address, &self.msg(MsgType::Ping, ()), PING_TIMEOUT).is_ok() {
                let rtt = t0.elapsed().as_secs_f64() * 1e3 + self.cfg.rtt_bias.get(&l.node_id).copied().unwrap_or(0.0);
                measured.push(Candidate {
                    leader_id: l.node_id.clone(),
                    address: l.address.clone(),
                    rtt_ms: rtt,
                    measured_at: now,
                });
            }
        }
        let mut st = self.lock();
        if st.edge.cache.refresh(version, measured, now) {
            st.edge.force_refresh = false;
        }
    }

    fn try_join(&self) {
        let now = self.now();
        let mut cache = {
            let st = self.lock();
            if st.role != Role::Edge || st.edge.leader.is_some() {
                return;
            }
            st.edge.cache.clone()
        };
        let devices = self.local_manifests();
        let mut adopted = Vec::new();
        let mut rejected = Vec::new();
        let joined = cache.join(&[], |c| {
            let req = JoinReq {
                edge: self.addr(),
                devices: devices.clone(),
            };
            match self.call(&c.address, MsgType::JoinReq, req) {
                Ok(m) if m.ty == MsgType::JoinAck => {
                    if let Ok(ack) = m.payload::<JoinAck>() {
                        adopted = ack.adopt;
                    }
                    JoinAttempt::Accepted
                }
                Ok(_) => {
                    rejected.push(c.leader_id.clone());
                    JoinAttempt::Rejected
                }
                Err(_) => JoinAttempt::Unreachable,
            }
        });
        self.adopt(&adopted);
        let mut st = self.lock();
        for r in rejected {
            Self::event(&mut st, now, &self.cfg.node_id, "rejected-by", r);
        }
        st.edge.cache.current_leader = cache.current_leader.clone();
        match joined {
            Ok(leader) => {
                Self::event(&mut st, now, &self.cfg.node_id, "joined", leader.node_id.clone());
                st.edge.leader = Some(leader);
                st.edge.last_ack = now;
                st.edge.next_hb = now + HEARTBEAT_INTERVAL_MS;
            }
            Err(_) => {
                Self::event(&mut st, now, &self.cfg.node_id, "no-leader", "");
                st.edge.force_refresh = true;
            }
        }
    }

    fn adopt(&self, devices: &[DeviceManifest]) -> usize {
        let mut n = 0;
        for m in devices {
            if !self.engine.registry.contains(&m.device_id) && self.engine.add_device(m.clone()).is_ok() {
                n += 1;
            }
        }
        n
    }

    fn on_failover(&self, f: DeviceFailover) -> Result<Message, ClusterError> {
        let n = self.adopt(&f.devices);
        let ids: Vec<&str> = f.devices.iter().map(|m| m.device_id.as_str()).collect();
        self.note("adopted", format!("{} from {} ({n} new)", ids.join(","), f.failed_edge));
        Ok(self.msg(MsgType::Ack, ()))
    }

    fn on_promote(&self, p: Promote) -> Result<Message, ClusterError> {
        let now = self.now();
        let old = {
            let mut st = self.lock();
            if st.role == Role::Leader {
                return Ok(self.msg(MsgType::Ack, ()));
            }
            if st.role != Role::Edge {
                return Err(ClusterError::Protocol("only edges can be promoted".into()));
            }
            st.role = Role::Leader;
            st.leader.view = ClusterView::new(self.cfg.threshold);
            st.leader.next_hb = now;
            Self::event(&mut st, now, &self.cfg.node_id, "promoted", "");
            st.edge.leader.take()
        };
        self.mirror_list(p.list);
        if let Some(old) = old {
            let me = self.cfg.node_id.clone();
            thread::spawn(move || {
                let _ = rpc(&old.address, &Message::new(MsgType::Leave, &me, ()), RPC_TIMEOUT);
            });
        }
        Ok(self.msg(MsgType::Ack, ()))
    }

    fn edge_tick(&self, now: Millis) {
        let (hb_to, refresh) = {
            let mut st = self.lock();
            let mut hb_to = None;
            if let Some(l) = st.edge.leader.clone() {
                if now.saturating_sub(st.edge.last_ack) > HEARTBEAT_INTERVAL_MS * MISS_THRESHOLD {
                    Self::event(&mut st, now, &self.cfg.node_id, "leader-failed", l.node_id.clone());
                    st.edge.leader = None;
                    st.edge.cache.current_leader = None;
                    st.edge.force_refresh = true;
                } else if now >= st.edge.next_hb {
                    st.edge.next_hb = now - now % HEARTBEAT_INTERVAL_MS + HEARTBEAT_INTERVAL_MS;
                    hb_to = Some(l);
                }
            }
            let refresh = st.edge.force_refresh || st.edge.cache.refresh_due(now);
            (hb_to, refresh)
        };
        if let Some(l) = hb_to {
            let hb = Heartbeat::Edge {
                edge: self.cfg.node_id.clone(),
            };
            if let Ok(ack) = self
                .call(&l.address, MsgType::Heartbeat, hb)
                .and_then(|m| m.payload::<HeartbeatAck>().map_err(io_err))
            {
                let mut st = self.lock();
                if ack.known {
                    st.edge.last_ack = now;
                } else if st.edge.leader.as_ref() == Some(&l) {
                    Self::event(&mut st, now, &self.cfg.node_id, "dropped-by", l.node_id.clone());
                    st.edge.leader = None;
                }
            }
        }
        if refresh {
            self.refresh_leaders();
        }
        self.try_join();
    }

    // ---- tick ----

    fn tick(&self) {
        let now = self.now();
        match self.role() {
            Role::Registry => self.registry_tick(now),
            Role::Leader => self.leader_tick(now),
            Role::Edge => self.edge_tick(now),
        }
        if self.role() == Role::Registry {
            return;
        }
        for (client, result) in self.engine.tick() {
            self.push(&client, &result);
        }
        self.run_remote_tasks(now);
    }

    fn run_remote_tasks(&self, now: Millis) {
        let due: Vec<(String, String, Option<FindSpec>, Query)> = self
            .lock()
            .remote_tasks
            .iter()
            .filter(|(_, t)| t.next_fire <= now)
            .map(|(id, t)| (id.clone(), t.client.clone(), t.find.clone(), t.query.clone()))
            .collect();
        for (id, client, find, query) in due {
            let result = self.remote_result(&id, &client, find, query, now);
            {
                let mut st = self.lock();
                let Some(t) = st.remote_tasks.get_mut(&id) else { continue };
                t.fires += 1;
                let n = now.saturating_sub(t.start) / t.period + 1;
                t.next_fire = t.start + n * t.period;
            }
            self.push(&client, &result);
        }
    }

    /// Fires one remote periodic task; failures become an error outcome.
    fn remote_result(&self, task_id: &str, client: &str, find: Option<FindSpec>, query: Query, now: Millis) -> TaskResult {
        let target = target_name(&query).unwrap_or("").to_string();
        let failed = |why: String| TaskResult {
            task_id: task_id.to_string(),
            time: now,
            per_device: vec![DeviceOutcome {
                device_id: target.clone(),
                outcome: Outcome::Error(why),
                served_by: None,
                latency_ms: 0,
            }],
            deadline_met: false,
            short: true,
        };
        match self.forward(client, find, query) {
            Some(QueryResultMsg {
                reply: Some(ClientReply::Ok {
                    submission: Submission::Result { mut result },
                }),
                ..
            }) => {
                result.task_id = task_id.to_string();
                result
            }
            Some(QueryResultMsg {
                reply: Some(ClientReply::Error(e)),
                ..
            }) => failed(e.message),
            _ => failed(format!("{target} not found in cluster")),
        }
    }

    // ---- queries ----

    /// Runs a forwarded statement here if its devices are here.
    fn execute_local(&self, f: &QueryFwd) -> QueryResultMsg {
        let found = |reply| QueryResultMsg {
            found: true,
            duplicate: false,
            served_at: Some(self.address.clone()),
            reply: Some(reply),
        };
        if let Some(find) = &f.find {
            match self.engine.submit_query(&f.client, Query::Find(find.clone())) {
                Ok(_) => {}
                Err(e) if unresolved(&e) => return QueryResultMsg::not_found(),
                Err(e) => return found(ClientReply::Error(ErrorReply::from(&e))),
            }
        }
        match self.engine.submit_query(&f.client, f.query.clone()) {
            Ok(s) => found(ClientReply::Ok { submission: s }),
            Err(e) if unresolved(&e) => QueryResultMsg::not_found(),
            Err(e) => found(ClientReply::Error(ErrorReply::from(&e))),
        }
    }

    /// Addresses of member edges hosting a device the statement could use.
    fn route_edges(&self, f: &QueryFwd) -> Vec<String> {
        let st = self.lock();
        let name = target_name(&f.query).unwrap_or("");
        let mut out: Vec<String> = st
            .leader
            .manifests
            .values()
            .filter(|m| match &f.find {
                Some(find) => DeviceRegistry::matches(m, &find.devtype, &find.predicates),
                None => match &f.query {
                    Query::Find(spec) => DeviceRegistry::matches(m, &spec.devtype, &spec.predicates),
                    _ => m.device_id == name || m.devtype == name,
                },
            })
            .filter_map(|m| st.leader.view.edge_of(&m.device_id))
            .filter(|e| *e != f.from)
            .filter_map(|e| st.leader.view.edges.get(e).map(|x| x.address.clone()))
            .collect();
        out.sort();
        out.dedup();
        out
    }

    fn on_query_fwd(&self, f: QueryFwd) -> QueryResultMsg {
        if self.role() != Role::Leader {
            return self.execute_local(&f);
        }
        if !self.seen.lock().unwrap().insert(&f.propagation_id) {
            return QueryResultMsg {
                duplicate: true,
                ..QueryResultMsg::not_found()
            };
        }
        let local = self.execute_local(&f);
        if local.found {
            return local;
        }
        let relay = |addr: &str, f: &QueryFwd| -> Option<QueryResultMsg> {
            self.call(addr, MsgType::QueryFwd, f)
                .ok()
                .and_then(|m| m.payload::<QueryResultMsg>().ok())
                .filter(|r| r.found)
        };
        let mut via = f.clone();
        via.from = self.cfg.node_id.clone();
        for addr in self.route_edges(&f) {
            if let Some(r) = relay(&addr, &via) {
                return r;
            }
        }
        let (hops, neighbors) = {
            let st = self.lock();
            (
                f.hops.unwrap_or_else(|| st.leader.list.diameter()),
                st.leader.list.tree_neighbors(&self.cfg.node_id),
            )
        };
        if hops == 0 {
            return QueryResultMsg::not_found();
        }
        via.hops = Some(hops - 1);
        for n in neighbors.iter().filter(|n| n.node_id != f.from) {
            if let Some(r) = relay(&n.address, &via) {
                return r;
            }
        }
        QueryResultMsg::not_found()
    }

    /// Sends a statement into the cluster: an edge asks its leader, a
    /// leader searches its cluster and then the leader tree.
    fn forward(&self, client: &str, find: Option<FindSpec>, query: Query) -> Option<QueryResultMsg> {
        let f = QueryFwd {
            propagation_id: new_propagation_id(),
            client: client.to_string(),
            find,
            query,
            hops: None,
            from: self.cfg.node_id.clone(),
        };
        let (role, leader) = {
            let st = self.lock();
            (st.role, st.edge.leader.clone())
        };
        let r = match role {
            Role::Leader => self.on_query_fwd(f),
            Role::Edge => self
                .call(&leader?.address, MsgType::QueryFwd, &f)
                .ok()?
                .payload::<QueryResultMsg>()
                .ok()?,
            Role::Registry => return None,
        };
        r.found.then_some(r)
    }

    /// Executes one client statement, locally when possible. Returns the
    /// reply plus results to push right after it.
    pub fn client_query(&self, client: &str, text: &str) -> (ClientReply, Vec<TaskResult>) {
        let query = match parse_query(text) {
            Ok(q) => q,
            Err(e) => return (ClientReply::Error(ErrorReply::from(&RuntimeError::Cql(e))), Vec::new()),
        };
        let local_err = match self.engine.submit_query(client, query.clone()) {
            Ok(s) => return (ClientReply::Ok { submission: s }, Vec::new()),
            Err(e) if unresolved(&e) && self.role() != Role::Registry => e,
            Err(e) => return (ClientReply::Error(ErrorReply::from(&e)), Vec::new()),
        };
        let not_found = || {
            let mut e = ErrorReply::from(&local_err);
            e.class = "NotFound".into();
            e.message = format!("{local_err}; not found in cluster");
            (ClientReply::Error(e), Vec::new())
        };
        let find = target_name(&query)
            .and_then(|n| self.lock().remote_aliases.get(&(client.to_string(), n.to_string())).cloned());
        if let Some((single, period)) = one_shot(&query) {
            let Some(first) = self.forward(client, find.clone(), single.clone()) else {
                return not_found();
            };
            let mut result = match first.reply {
                Some(ClientReply::Ok {
                    submission: Submission::Result { result },
                }) => result,
                Some(other) => return (other, Vec::new()),
                None => return not_found(),
            };
            let now = self.now();
            let task_id = {
                let mut st = self.lock();
                let id = format!("{}-r{}", self.cfg.node_id, st.next_remote);
                st.next_remote += 1;
                st.remote_tasks.insert(
                    id.clone(),
                    RemoteTask {
                        client: client.to_string(),
                        find,
                        query: single,
                        period,
                        start: now,
                        next_fire: now + period,
                        fires: 1,
                    },
                );
                id
            };
            result.task_id = task_id.clone();
            return (
                ClientReply::Ok {
                    submission: Submission::Scheduled { task_id },
                },
                vec![result],
            );
        }
        let Some(r) = self.forward(client, find, query.clone()) else {
            return not_found();
        };
        let reply = r.reply.unwrap_or_else(|| not_found().0);
        match (&query, &reply) {
            (Query::Find(spec), ClientReply::Ok { .. }) => {
                self.lock()
                    .remote_aliases
                    .insert((client.to_string(), spec.alias.clone()), spec.clone());
            }
            (
                Query::Event(_),
                ClientReply::Ok {
                    submission: Submission::Scheduled { .. },
                },
            ) => {
                if let Some(addr) = r.served_at {
                    self.lock().remote_events.push((client.to_string(), addr));
                }
            }
            _ => {}
        }
        (reply, Vec::new())
    }

    fn cancel_local(&self, client: &str) -> usize {
        let mut st = self.lock();
        let before = st.remote_tasks.len();
        st.remote_tasks.retain(|_, t| t.client != client);
        st.remote_aliases.retain(|(c, _), _| c != client);
        let remote = before - st.remote_tasks.len();
        drop(st);
        self.engine.cancel_client(client) + remote
    }

    /// Cancels everything `client` owns here and on nodes running its events.
    pub fn close_client(&self, client: &str) -> usize {
        let mut n = self.cancel_local(client);
        let targets: Vec<String> = {
            let mut st = self.lock();
            let (mine, rest): (Vec<_>, Vec<_>) = st.remote_events.drain(..).partition(|(c, _)| c == client);
            st.remote_events = rest;
            let mut addrs: Vec<String> = mine.into_iter().map(|(_, a)| a).collect();
            addrs.sort();
            addrs.dedup();
            addrs
        };
        for addr in targets {
            let hello = Hello {
                client: client.to_string(),
            };
            if let Ok(m) = self.call(&addr, MsgType::Cancel, hello) {
                n += m.payload::<Closed>().map(|c| c.cancelled).unwrap_or(0);
            }
        }
        n
    }

    pub fn tasks_of(&self, client: &str) -> Vec<crate::runtime::TaskInfo> {
        let mut out = self.engine.tasks(Some(client));
        let st = self.lock();
        for (id, t) in st.remote_tasks.iter().filter(|(_, t)| t.client == client) {
            out.push(crate::runtime::TaskInfo {
                task_id: id.clone(),
                client_id: t.client.clone(),
                kind: match t.query {
                    Query::Actuate(_) => TaskKind::Actuate,
                    _ => TaskKind::Sense,
                },
                period: t.period,
                status: crate::runtime::TaskStatus::Active,
                fires: t.fires,
                next_fire: t.next_fire,
            });
        }
        out
    }

    // ---- client sessions ----

    fn seal(&self, body: &impl serde::Serialize, to: &PublicKey) -> Envelope {
        let bytes = serde_json::to_vec(body).expect("serializable");
        Envelope::seal(&bytes, &self.cfg.node_id, self.auth.node_key(), to)
    }

    fn push(&self, client: &str, result: &TaskResult) {
        let mut dead = None;
        {
            let sessions = self.sessions.lock().unwrap();
            if let Some(s) = sessions.get(client) {
                let env = self.seal(result, &s.public);
                let frame = self.msg(MsgType::Push, env);
                if write_frame(&mut *s.writer.lock().unwrap(), &frame).is_err() {
                    dead = Some(s.writer.clone());
                }
            }
        }
        if let Some(w) = dead {
            self.end_session(client, &w);
        }
    }

    fn end_session(&self, client: &str, writer: &Arc<Mutex<TcpStream>>) -> usize {
        let mut sessions = self.sessions.lock().unwrap();
        if sessions.get(client).is_some_and(|s| Arc::ptr_eq(&s.writer, writer)) {
            sessions.remove(client);
            drop(sessions);
            self.close_client(client)
        } else {
            0
        }
    }

    fn serve_session(&self, mut stream: TcpStream, hello: Message) {
        let id = &self.cfg.node_id;
        let Ok(hello) = hello.payload::<Hello>() else { return };
        let nonce = self.auth.issue_nonce();
        let challenge = Challenge {
            node_id: id.clone(),
            nonce: nonce.clone(),
            node_key: self.auth.node_public().to_pem(),
        };
        if write_frame(&mut stream, &self.msg(MsgType::Challenge, challenge)).is_err() {
            return;
        }
        let auth = match read_frame(&mut stream) {
            Ok(Some(m)) if m.ty == MsgType::Auth => m,
            _ => return,
        };
        let client = match auth
            .payload::<Envelope>()
            .map_err(|e| PrivacyError::AuthFailure(e.to_string()))
            .and_then(|env| self.auth.authenticate(&env, &nonce))
        {
            Ok(c) if c == hello.client => c,
            Ok(_) => {
                let _ = write_frame(&mut stream, &Message::error(id, "authentication failed: client id mismatch"));
                return;
            }
            Err(e) => {
                let _ = write_frame(&mut stream, &Message::error(id, e.to_string()));
                return;
            }
        };
        let Ok(public) = self.auth.keystore().public(&client) else { return };
        let Ok(w) = stream.try_clone() else { return };
        let writer = Arc::new(Mutex::new(w));
        self.sessions.lock().unwrap().insert(
            client.clone(),
            Session {
                writer: writer.clone(),
                public: public.clone(),
            },
        );
        let send = |m: &Message| write_frame(&mut *writer.lock().unwrap(), m).is_ok();
        if !send(&self.msg(MsgType::AuthOk, Hello { client: client.clone() })) {
            self.end_session(&client, &writer);
            return;
        }
        loop {
            let msg = match read_frame(&mut stream) {
                Ok(Some(m)) if !self.halted.load(Ordering::SeqCst) => m,
                _ => {
                    self.end_session(&client, &writer);
                    return;
                }
            };
            match msg.ty {
                MsgType::Query => {
                    let Ok(req) = msg.payload::<SealedRequest>() else { continue };
                    let text = req
                        .envelope
                        .open(self.auth.node_key(), &public)
                        .map_err(|e| e.to_string())
                        .and_then(|b| String::from_utf8(b).map_err(|e| e.to_string()));
                    let (reply, pushes) = match text {
                        Ok(t) => self.client_query(&client, &t),
                        Err(e) => (ClientReply::Error(ErrorReply::new("PrivacyError", e)), Vec::new()),
                    };
                    let env = self.seal(&reply, &public);
                    let ok = send(&self.msg(MsgType::Result, SealedRequest { id: req.id, envelope: env }));
                    for r in &pushes {
                        self.push(&client, r);
                    }
                    if !ok {
                        self.end_session(&client, &writer);
                        return;
                    }
                }
                MsgType::Tasks => {
                    let list = TaskList {
                        tasks: self.tasks_of(&client),
                    };
                    if !send(&self.msg(MsgType::TaskList, list)) {
                        self.end_session(&client, &writer);
                        return;
                    }
                }
                MsgType::Close => {
                    // the session leaves the table before the reply, so no push follows it
                    let n = self.end_session(&client, &writer);
                    send(&self.msg(MsgType::Closed, Closed { cancelled: n }));
                    return;
                }
                _ => {
                    send(&Message::error(id, format!("unexpected {:?} in session", msg.ty)));
                }
            }
        }
    }
}
