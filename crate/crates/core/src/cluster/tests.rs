use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::device::{load_manifest, DeviceManifest};
use crate::runtime::{Outcome, Submission};
use crate::Millis;

fn n(id: &str) -> NodeAddr {
    NodeAddr::new(id, format!("{id}.local:1"))
}

fn cand(id: &str, rtt: f64) -> Candidate {
    Candidate {
        leader_id: id.into(),
        address: format!("{id}.local:1"),
        rtt_ms: rtt,
        measured_at: 0,
    }
}

// ---- scaler and daemon ----

#[test]
fn scaler_examples() {
    assert_eq!(scaler_target(1, 17, 8), 3);
    assert_eq!(scaler_target(2, 0, 8), 2);
    assert_eq!(scaler_target(1, 0, 8), 1);
    assert_eq!(scaler_target(1, 8, 8), 1);
    assert_eq!(scaler_target(1, 9, 8), 2);
}

#[test]
fn daemon_promotes_first_potential() {
    let mut l = LeaderList::default();
    l.add_active(n("L1"));
    l.add_potential(n("P1"));
    l.set_target(2);
    let v = l.version;
    let out = daemon_tick(&mut l, |_| true);
    assert_eq!(out.promoted, vec!["P1"]);
    assert_eq!(out.deficit, 0);
    assert!(l.is_active("P1") && !l.is_potential("P1"));
    assert!(l.version > v);
}

#[test]
fn daemon_flags_deficit_when_no_potential() {
    let mut l = LeaderList::default();
    l.add_active(n("L1"));
    l.set_target(2);
    let v = l.version;
    let out = daemon_tick(&mut l, |_| panic!("nothing to promote"));
    assert!(out.promoted.is_empty());
    assert_eq!(out.deficit, 1);
    assert_eq!(l.version, v);
}

#[test]
fn daemon_skips_unreachable_candidate() {
    let mut l = LeaderList::default();
    l.add_active(n("L1"));
    l.add_potential(n("P1"));
    l.add_potential(n("P2"));
    l.set_target(2);
    let out = daemon_tick(&mut l, |c| c.node_id != "P1");
    assert_eq!(out.failed, vec!["P1"]);
    assert_eq!(out.promoted, vec!["P2"]);
    assert!(!l.is_potential("P1") && !l.is_active("P1"));
    assert_eq!(l.active_leaders.len(), 2);
}

#[test]
fn leader_list_versions_only_grow_and_lists_stay_disjoint() {
    let mut l = LeaderList::default();
    let mut last = l.version;
    let ops: Vec<Box<dyn Fn(&mut LeaderList) -> bool>> = vec![
        Box::new(|l| l.add_potential(n("A"))),
        Box::new(|l| l.add_potential(n("A"))),
        Box::new(|l| l.add_active(n("B"))),
        Box::new(|l| l.add_active(n("A"))),
        Box::new(|l| l.add_potential(n("A"))),
        Box::new(|l| l.set_target(3)),
        Box::new(|l| l.set_target(3)),
        Box::new(|l| l.remove("B")),
        Box::new(|l| l.remove("B")),
    ];
    for op in ops {
        let changed = op(&mut l);
        assert_eq!(l.version > last, changed);
        assert!(l.version >= last);
        last = l.version;
        assert!(l.active_leaders.iter().all(|a| !l.is_potential(&a.node_id)));
    }
    assert_eq!(l.active_leaders, vec![n("A")]);
}

#[test]
fn leader_tree_is_binary_in_promotion_order() {
    let mut l = LeaderList::default();
    for id in ["L1", "L2", "L3", "L4", "L5", "L6", "L7"] {
        l.add_active(n(id));
    }
    // parent = first earlier leader with fewer than two children
    let mut children: BTreeMap<String, usize> = BTreeMap::new();
    for (i, leader) in l.active_leaders.iter().enumerate().skip(1) {
        let expected = l.active_leaders[..i]
            .iter()
            .find(|p| children.get(&p.node_id).copied().unwrap_or(0) < 2)
            .unwrap();
        assert_eq!(l.tree_parent(&leader.node_id), Some(expected));
        *children.entry(expected.node_id.clone()).or_default() += 1;
    }
    assert_eq!(l.tree_parent("L1"), None);
    let ids = |v: Vec<NodeAddr>| v.into_iter().map(|x| x.node_id).collect::<Vec<_>>();
    assert_eq!(ids(l.tree_neighbors("L2")), vec!["L1", "L4", "L5"]);
    assert_eq!(l.diameter(), 4);
}

#[test]
fn tree_diameter_small_cases() {
    let mut l = LeaderList::default();
    assert_eq!(l.diameter(), 0);
    for (id, d) in [("A", 0), ("B", 1), ("C", 2), ("D", 3), ("E", 3), ("F", 4)] {
        l.add_active(n(id));
        assert_eq!(l.diameter(), d, "after {id}");
    }
}

#[test]
fn store_reloads_latest_version_and_ignores_torn_tail() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("leaders.log");
    let store = LeaderStore::file(&path);
    assert_eq!(store.load().unwrap(), LeaderList::default());
    let mut l = LeaderList::default();
    l.add_active(n("L1"));
    store.append(&l).unwrap();
    l.add_potential(n("P1"));
    store.append(&l).unwrap();
    std::fs::OpenOptions::new()
        .append(true)
        .open(&path)
        .and_then(|mut f| std::io::Write::write_all(&mut f, b"{\"version\": 9"))
        .unwrap();
    assert_eq!(store.load().unwrap(), l);
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 3);
}

#[test]
fn bootstrap_file_format() {
    let nodes = parse_bootstrap("# leaders\nL1 127.0.0.1:7001\n\n  L2   10.0.0.2:7002 \n").unwrap();
    assert_eq!(nodes, vec![NodeAddr::new("L1", "127.0.0.1:7001"), NodeAddr::new("L2", "10.0.0.2:7002")]);
    assert_eq!(parse_bootstrap(&render_bootstrap(&nodes)).unwrap(), nodes);
    assert!(matches!(
        parse_bootstrap("L1 127.0.0.1:1\nL2\n"),
        Err(ClusterError::BadBootstrap { line: 2, .. })
    ));
    assert!(parse_bootstrap("L1 nocolon").is_err());
}

#[test]
fn seen_ids_drop_duplicates() {
    let mut s = SeenIds::new(2);
    assert!(s.insert("a"));
    assert!(!s.insert("a"));
    assert!(s.insert("b"));
    assert!(s.insert("c"));
    // bounded: the oldest id is forgotten
    assert!(s.insert("a"));
    let a = new_propagation_id();
    assert_eq!(a.len(), 32);
    assert_ne!(a, new_propagation_id());
}

// ---- cluster view ----

fn view_with(edges: &[(&str, &[&str])]) -> ClusterView {
    let mut v = ClusterView::new(8);
    for (e, ds) in edges {
        let ds: Vec<String> = ds.iter().map(|s| s.to_string()).collect();
        v.join(e, &format!("{e}:1"), &ds, 0).unwrap();
    }
    v
}

#[test]
fn failover_only_survivor() {
    let mut v = view_with(&[("E1", &["D1"]), ("E2", &[])]);
    let r = v.failover_devices("E1");
    assert_eq!(r.moves, BTreeMap::from([("D1".to_string(), "E2".to_string())]));
    assert_eq!(v.edge_of("D1"), Some("E2"));
    assert!(!v.edges.contains_key("E1"));
}

#[test]
fn failover_least_loaded() {
    let mut v = view_with(&[("E1", &["D1", "D2"]), ("E2", &["D3"]), ("E3", &[])]);
    let r = v.failover_devices("E1");
    assert_eq!(r.moves.get("D1").map(String::as_str), Some("E3"));
    assert_eq!(r.moves.get("D2").map(String::as_str), Some("E3"));
    assert_eq!(v.edge_of("D3"), Some("E2"));
    assert!(r.orphaned.is_empty());
}

#[test]
fn failover_single_edge_orphans() {
    let mut v = view_with(&[("E1", &["D1", "D2"])]);
    let r = v.failover_devices("E1");
    assert!(r.moves.is_empty());
    assert_eq!(r.orphaned, vec!["D1", "D2"]);
    assert_eq!(v.orphans.len(), 2);
    assert!(v.device_assignment.is_empty());
}

proptest! {
    /// The chosen target beats every other survivor on (load, id), and every
    /// device ends up assigned to exactly one live edge.
    #[test]
    fn failover_target_is_least_loaded(loads in proptest::collection::vec(0usize..4, 2..6), failed in 0usize..6) {
        let failed = failed % loads.len();
        let mut v = ClusterView::new(8);
        let mut k = 0;
        for (i, &load) in loads.iter().enumerate() {
            let ds: Vec<String> = (0..load).map(|_| { k += 1; format!("D{k}") }).collect();
            v.join(&format!("E{i}"), "x:1", &ds, 0).unwrap();
        }
        let before = v.clone();
        let failed_id = format!("E{failed}");
        let r = v.failover_devices(&failed_id);
        let survivors: Vec<(&String, usize)> = before.edges.iter()
            .filter(|(id, _)| **id != failed_id)
            .map(|(id, e)| (id, e.device_ids.len()))
            .collect();
        let best = survivors.iter().min_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(b.0))).unwrap().0;
        for t in r.moves.values() {
            prop_assert_eq!(t, best);
        }
        prop_assert_eq!(r.moves.len(), before.edges[&failed_id].device_ids.len());
        let total: usize = v.edges.values().map(|e| e.device_ids.len()).sum();
        prop_assert_eq!(total, k);
        for (d, e) in &v.device_assignment {
            prop_assert!(v.edges[e].device_ids.contains(d));
        }
    }
}

#[test]
fn heartbeat_tick_detects_silent_edges_and_peers() {
    let mut v = view_with(&[("E1", &[]), ("E2", &[])]);
    v.set_peers(&[n("L2")], 0);
    assert!(v.heartbeat_tick(3_000, 1_000, 3).is_empty());
    v.heartbeat("E2", 2_500);
    v.peer_heartbeat("L2", "L2:1", 2_500);
    assert!(v.heartbeat_tick(3_000, 1_000, 3).is_empty(), "all fresh");
    assert_eq!(v.heartbeat_tick(3_001, 1_000, 3), vec![Failure::Edge("E1".into())]);
    assert_eq!(
        v.heartbeat_tick(5_501, 1_000, 3),
        vec![Failure::Edge("E1".into()), Failure::Edge("E2".into()), Failure::Leader("L2".into())]
    );
    assert!(v.peer_leaders.is_empty());
}

#[test]
fn view_never_exceeds_threshold() {
    let mut v = ClusterView::new(2);
    v.join("E1", "a", &[], 0).unwrap();
    v.join("E2", "b", &[], 0).unwrap();
    assert!(matches!(v.join("E3", "c", &[], 0), Err(ClusterError::ThresholdFull)));
    // a known edge may rejoin
    v.join("E1", "a2", &["D1".into()], 5).unwrap();
    assert_eq!(v.edges.len(), 2);
    assert_eq!(v.edge_of("D1"), Some("E1"));
}

// ---- edge leader cache ----

#[test]
fn edge_joins_lowest_rtt() {
    let mut c = EdgeLeaderCache::default();
    c.refresh(1, vec![cand("L2", 20.0), cand("L1", 5.0)], 0);
    assert_eq!(c.candidates[0].leader_id, "L1");
    let joined = c.join(&[], |_| JoinAttempt::Accepted).unwrap();
    assert_eq!(joined.node_id, "L1");
}

#[test]
fn edge_falls_through_full_leader() {
    let mut c = EdgeLeaderCache::default();
    c.refresh(1, vec![cand("L1", 5.0), cand("L2", 20.0)], 0);
    let mut tried = Vec::new();
    let joined = c
        .join(&[], |x| {
            tried.push(x.leader_id.clone());
            if x.leader_id == "L1" {
                JoinAttempt::Rejected
            } else {
                JoinAttempt::Accepted
            }
        })
        .unwrap();
    assert_eq!(joined.node_id, "L2");
    assert_eq!(tried, vec!["L1", "L2"]);
}

#[test]
fn edge_reconnect_cases() {
    let mut c = EdgeLeaderCache::default();
    c.refresh(3, vec![cand("L2", 10.0), cand("L3", 8.0)], 0);
    assert_eq!(c.join(&[], |_| JoinAttempt::Accepted).unwrap().node_id, "L3");
    let full_l3 = |x: &Candidate| if x.leader_id == "L3" { JoinAttempt::Rejected } else { JoinAttempt::Accepted };
    assert_eq!(c.join(&[], full_l3).unwrap().node_id, "L2");
    assert!(matches!(c.join(&[], |_| JoinAttempt::Unreachable), Err(ClusterError::NoLeaderAvailable)));
    assert_eq!(c.current_leader, None);
    // a mirrored list never regresses
    assert!(!c.refresh(2, vec![cand("L9", 1.0)], 10));
    assert_eq!(c.list_version, 3);
    assert!(c.refresh_due(5_000) && !c.refresh_due(4_999));
}

// ---- live nodes on a shared simulated clock ----

fn thermo(id: &str, location: &str) -> DeviceManifest {
    load_manifest(&format!(
        r#"{{"deviceId": "{id}", "devtype": "Thermometer", "attributes": {{"location": "{location}"}},
            "properties": [{{"name": "Temperature", "datatype": "Double", "units": "C"}}],
            "simulation": {{"Temperature": {{"kind": "linear", "start": 20, "slopePerHour": 0.4}}}}}}"#
    ))
    .unwrap()
}

struct Net {
    _dir: tempfile::TempDir,
    keys: std::path::PathBuf,
    nodes: Vec<Arc<Node>>,
    now: Millis,
}

impl Net {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let keys = dir.path().join("keys");
        Self {
            _dir: dir,
            keys,
            nodes: Vec::new(),
            now: 0,
        }
    }

    fn cfg(&self, id: &str, role: Role) -> NodeConfig {
        let mut c = NodeConfig::new(id, role, "127.0.0.1:0");
        c.keystore = self.keys.clone();
        c.sim_clock = true;
        c
    }

    fn add(&mut self, cfg: NodeConfig) -> Arc<Node> {
        let node = Node::start(cfg).unwrap();
        node.set_time(self.now);
        self.nodes.push(node.clone());
        node
    }

    fn node(&self, id: &str) -> &Arc<Node> {
        self.nodes.iter().find(|n| n.id() == id).unwrap()
    }

    fn advance_to(&mut self, t: Millis, step: Millis) {
        while self.now < t {
            self.now = (self.now + step).min(t);
            for n in &self.nodes {
                n.set_time(self.now);
            }
        }
    }

    /// Edge id → hosted device ids, over nodes still answering.
    fn hosting(&self, dead: &[&str]) -> BTreeMap<String, Vec<String>> {
        self.nodes
            .iter()
            .filter(|n| !dead.contains(&n.id()))
            .map(|n| (n.id().to_string(), n.engine.registry.ids()))
            .collect()
    }

    fn shutdown(&self) {
        for n in &self.nodes {
            n.shutdown();
        }
    }
}

fn leader(net: &mut Net, id: &str, registry: &str, threshold: usize) -> Arc<Node> {
    let mut c = net.cfg(id, Role::Leader);
    c.registry = Some(registry.into());
    c.threshold = threshold;
    net.add(c)
}

fn edge(net: &mut Net, id: &str, registry: &str, devices: Vec<DeviceManifest>, bias: &[(&str, f64)]) -> Arc<Node> {
    let mut c = net.cfg(id, Role::Edge);
    c.registry = Some(registry.into());
    c.devices = devices;
    c.rtt_bias = bias.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    net.add(c)
}

fn leader_of(node: &Node) -> Option<String> {
    node.snapshot().leader
}

#[test]
fn edge_join_picks_closest_then_next_when_full() {
    let mut net = Net::new();
    let reg = net.add(net.cfg("R", Role::Registry)).address().to_string();
    leader(&mut net, "L1", &reg, 1);
    leader(&mut net, "L2", &reg, 1);
    let bias = [("L1", 5.0), ("L2", 20.0)];
    let e1 = edge(&mut net, "E1", &reg, vec![], &bias);
    let e2 = edge(&mut net, "E2", &reg, vec![], &bias);
    assert_eq!(leader_of(&e1).as_deref(), Some("L1"));
    assert_eq!(leader_of(&e2).as_deref(), Some("L2"), "L1 is at threshold 1");
    assert!(e2.snapshot().events.iter().any(|e| e.kind == "rejected-by" && e.detail == "L1"));
    net.shutdown();
}

#[test]
fn edge_uses_bootstrap_when_registry_is_down() {
    let mut net = Net::new();
    let dead = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let dead_addr = dead.local_addr().unwrap().to_string();
    drop(dead);
    let l2 = leader(&mut net, "L2", &dead_addr, 8);
    let boot = net._dir.path().join("bootstrap.txt");
    std::fs::write(&boot, render_bootstrap(&[l2.addr()])).unwrap();
    let mut c = net.cfg("E1", Role::Edge);
    c.registry = Some(dead_addr);
    c.bootstrap = Some(boot);
    let e1 = net.add(c);
    assert_eq!(leader_of(&e1).as_deref(), Some("L2"));
    assert!(e1.snapshot().events.iter().any(|e| e.kind == "bootstrap"));
    net.shutdown();
}

#[test]
fn killed_edge_devices_fail_over_and_stay_queryable() {
    let mut net = Net::new();
    let reg = net.add(net.cfg("R", Role::Registry)).address().to_string();
    let l1 = leader(&mut net, "L1", &reg, 8);
    edge(&mut net, "E1", &reg, vec![thermo("D1", "a"), thermo("D2", "a")], &[]);
    edge(&mut net, "E2", &reg, vec![thermo("D3", "b")], &[]);
    edge(&mut net, "E3", &reg, vec![], &[]);
    net.advance_to(2_000, 250);
    let (reply, _) = l1.client_query("app", "SENSE Temperature FROM D1");
    assert!(matches!(reply, ClientReply::Ok { .. }), "{reply:?}");

    net.node("E1").halt();
    let killed_at = net.now;
    let mut recovered = None;
    while net.now < killed_at + 8_000 {
        net.advance_to(net.now + 250, 250);
        let hosting = net.hosting(&["E1"]);
        if recovered.is_none() && hosting["E3"].contains(&"D1".to_string()) {
            recovered = Some(net.now - killed_at);
        }
    }
    let recovered = recovered.expect("failover happened");
    assert!(recovered <= 5_000, "recovery took {recovered} ms");
    let hosting = net.hosting(&["E1"]);
    assert_eq!(hosting["E3"], vec!["D1", "D2"]);
    assert_eq!(hosting["E2"], vec!["D3"]);
    for d in ["D1", "D2", "D3"] {
        let (reply, _) = l1.client_query("app", &format!("SENSE Temperature FROM {d}"));
        let ClientReply::Ok {
            submission: Submission::Result { result },
        } = reply
        else {
            panic!("{d}: {reply:?}")
        };
        assert!(matches!(result.per_device[0].outcome, Outcome::Value(_)));
    }
    net.shutdown();
}

#[test]
fn killed_leader_is_replaced_and_edges_rejoin() {
    let mut net = Net::new();
    let mut rc = net.cfg("R", Role::Registry);
    rc.min_leaders = 2;
    rc.threshold = 2;
    let registry = net.add(rc);
    let reg = registry.address().to_string();
    leader(&mut net, "L1", &reg, 2);
    leader(&mut net, "L2", &reg, 2);
    let near1 = [("L1", 1.0), ("L2", 10.0)];
    let near2 = [("L1", 10.0), ("L2", 1.0)];
    edge(&mut net, "E1", &reg, vec![thermo("D1", "a")], &near1);
    edge(&mut net, "E2", &reg, vec![thermo("D2", "a")], &near1);
    edge(&mut net, "E3", &reg, vec![thermo("D3", "b")], &near2);
    let mut pc = net.cfg("E4", Role::Edge);
    pc.registry = Some(reg.clone());
    pc.potential = true;
    pc.devices = vec![thermo("D4", "b")];
    pc.rtt_bias = near2.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    net.add(pc);
    net.advance_to(3_000, 250);
    assert_eq!(registry.snapshot().list.target, 2);
    assert_eq!(leader_of(net.node("E1")).as_deref(), Some("L1"));
    assert_eq!(leader_of(net.node("E4")).as_deref(), Some("L2"));

    net.node("L1").halt();
    let mut detected = None;
    let mut settled = None;
    let start = net.now;
    while net.now < start + 15_000 && settled.is_none() {
        net.advance_to(net.now + 250, 250);
        let snap = registry.snapshot();
        if detected.is_none() && !snap.list.is_active("L1") {
            detected = Some(net.now);
        }
        let rejoined = ["E1", "E2"]
            .iter()
            .all(|e| leader_of(net.node(e)).is_some_and(|l| snap.list.is_active(&l)));
        if detected.is_some() && rejoined && snap.list.active_leaders.len() == snap.list.target {
            settled = Some(net.now);
        }
    }
    let (detected, settled) = (detected.unwrap(), settled.expect("cluster converged"));
    assert!(
        settled - detected <= 2 * DAEMON_INTERVAL_MS,
        "converged {} ms after detection",
        settled - detected
    );
    let snap = registry.snapshot();
    assert!(snap.list.is_active("E4"), "potential leader promoted: {:?}", snap.list);
    assert_eq!(net.node("E4").role(), Role::Leader);
    for n in &net.nodes {
        if n.role() == Role::Leader && n.id() != "L1" {
            assert!(n.snapshot().edges.len() <= 2);
        }
    }
    net.shutdown();
}

#[test]
fn query_propagates_along_leader_tree() {
    let mut net = Net::new();
    let reg = net.add(net.cfg("R", Role::Registry)).address().to_string();
    for l in ["L1", "L2", "L3"] {
        leader(&mut net, l, &reg, 8);
    }
    edge(&mut net, "E2", &reg, vec![], &[("L2", 0.0), ("L1", 50.0), ("L3", 50.0)]);
    edge(&mut net, "E3", &reg, vec![thermo("far", "x")], &[("L3", 0.0), ("L1", 50.0), ("L2", 50.0)]);
    net.advance_to(2_000, 250);
    assert_eq!(leader_of(net.node("E3")).as_deref(), Some("L3"));

    // E2 -> L2 -> L1 -> L3 -> E3: two leader hops
    let (reply, _) = net.node("E2").client_query("app", "SENSE Temperature FROM far");
    assert!(matches!(reply, ClientReply::Ok { submission: Submission::Result { .. } }), "{reply:?}");
    let (reply, _) = net.node("E2").client_query("app", "SENSE Temperature FROM nowhere");
    let ClientReply::Error(e) = reply else { panic!("{reply:?}") };
    assert_eq!(e.class, "NotFound");

    // a remote FIND alias is usable afterwards
    let (reply, _) = net.node("E2").client_query("app", "FIND Thermometer WHERE location=x AS xs");
    assert!(matches!(reply, ClientReply::Ok { .. }), "{reply:?}");
    let (reply, _) = net.node("E2").client_query("app", "SENSE Temperature FROM xs");
    assert!(matches!(reply, ClientReply::Ok { submission: Submission::Result { .. } }), "{reply:?}");

    // the same propagation id is executed once
    let l3 = net.node("L3").address().to_string();
    let fwd = QueryFwd {
        propagation_id: "dup-1".into(),
        client: "app".into(),
        find: None,
        query: crate::cql::parse_query("SENSE Temperature FROM far").unwrap(),
        hops: None,
        from: "test".into(),
    };
    let send = || {
        rpc(&l3, &Message::new(MsgType::QueryFwd, "test", &fwd), RPC_TIMEOUT)
            .unwrap()
            .payload::<QueryResultMsg>()
            .unwrap()
    };
    let first = send();
    assert!(first.found && !first.duplicate);
    let second = send();
    assert!(!second.found && second.duplicate);
    net.shutdown();
}

#[test]
fn remote_periodic_task_streams_with_its_own_id() {
    let mut net = Net::new();
    let reg = net.add(net.cfg("R", Role::Registry)).address().to_string();
    let l1 = leader(&mut net, "L1", &reg, 8);
    edge(&mut net, "E1", &reg, vec![thermo("D1", "a")], &[]);
    net.advance_to(1_000, 250);
    let (reply, pushes) = l1.client_query("app", "SENSE Temperature FROM D1 PERIOD 1 SECS");
    let ClientReply::Ok {
        submission: Submission::Scheduled { task_id },
    } = reply
    else {
        panic!("{reply:?}")
    };
    assert_eq!(pushes.len(), 1);
    assert_eq!(pushes[0].task_id, task_id);
    net.advance_to(4_000, 250);
    let info = l1.tasks_of("app");
    assert_eq!(info.len(), 1);
    assert_eq!(info[0].fires, 4);
    assert_eq!(l1.close_client("app"), 1);
    assert!(l1.tasks_of("app").is_empty());
    net.shutdown();
}
