use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use super::trace::{Trace, TraceLine};
use super::{
    Clock, DeviceOutcome, Outcome, RuntimeError, ServedBy, Submission, Target, Task, TaskInfo, TaskKind,
    TaskResult, TaskStatus,
};
use crate::cache::{
    AdapterRegistry, CacheKey, CachePolicy, CacheState, CacheStore, LookupError, ModelRegistry, ModelSpec,
    ServedBy as CacheServed,
};
use crate::cql::{parse_query, ActuateSpec, Predicate, Query, SenseSpec, Trigger};
use crate::device::{DevSet, DeviceDriver, DeviceError, DeviceManifest, DeviceRegistry, DriverKind};
use crate::privacy::{Mediated, Mediator};
use crate::value::Value;
use crate::Millis;

/// Upper bound of the event evaluation tick.
pub const MAX_EVAL_TICK_MS: Millis = 1000;
/// Policy owner of devices whose manifest names none.
pub const DEFAULT_OWNER: &str = "admin";

/// Per-node runtime: device registry, shared cache, privacy mediator and
/// the task table.
pub struct Engine {
    pub registry: DeviceRegistry,
    pub cache: CacheStore,
    pub mediator: Arc<Mediator>,
    pub models: ModelRegistry,
    pub adapters: AdapterRegistry,
    pub trace: Trace,
    clock: Arc<dyn Clock>,
    tasks: Mutex<BTreeMap<u64, Task>>,
    aliases: Mutex<BTreeMap<(String, String), Target>>,
    next_id: AtomicU64,
    id_prefix: String,
    mediations: AtomicU64,
}

fn default_model(manifest: &DeviceManifest) -> ModelSpec {
    manifest
        .cache_model
        .clone()
        .unwrap_or_else(|| ModelSpec::named("Consistent"))
}

impl Engine {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        Self::with_prefix(clock, "t")
    }

    /// Task ids are `<prefix><n>`; nodes use their id so ids are unique
    /// across a cluster.
    pub fn with_prefix(clock: Arc<dyn Clock>, prefix: &str) -> Self {
        Self {
            registry: DeviceRegistry::new(),
            cache: CacheStore::new(),
            mediator: Arc::new(Mediator::new(0)),
            models: ModelRegistry::default(),
            adapters: AdapterRegistry::default(),
            trace: Trace::default(),
            clock,
            tasks: Mutex::new(BTreeMap::new()),
            aliases: Mutex::new(BTreeMap::new()),
            next_id: AtomicU64::new(1),
            id_prefix: prefix.to_string(),
            mediations: AtomicU64::new(0),
        }
    }

    pub fn now(&self) -> Millis {
        self.clock.now()
    }

    /// Number of values that passed through the privacy mediator.
    pub fn mediation_count(&self) -> u64 {
        self.mediations.load(Ordering::SeqCst)
    }

    pub fn add_device(&self, manifest: DeviceManifest) -> Result<(), DeviceError> {
        let owner = manifest.owner.clone().unwrap_or_else(|| DEFAULT_OWNER.into());
        let id = manifest.device_id.clone();
        self.registry.register_virtual(manifest)?;
        self.mediator.register_sensor(&id, &owner);
        Ok(())
    }

    pub fn add_device_with_driver(
        &self,
        manifest: DeviceManifest,
        driver: Box<dyn DeviceDriver>,
    ) -> Result<(), DeviceError> {
        let owner = manifest.owner.clone().unwrap_or_else(|| DEFAULT_OWNER.into());
        let id = manifest.device_id.clone();
        self.registry.upsert(manifest, driver)?;
        self.mediator.register_sensor(&id, &owner);
        Ok(())
    }

    pub fn remove_device(&self, id: &str) -> Option<DeviceManifest> {
        self.cache.remove_device(id);
        self.mediator.forget_sensor(id);
        self.registry.unregister(id)
    }

    fn target_of(&self, client: &str, name: &str) -> Result<Target, RuntimeError> {
        if let Some(t) = self.aliases.lock().unwrap().get(&(client.to_string(), name.to_string())) {
            return Ok(t.clone());
        }
        if let Some(m) = self.registry.manifest(name) {
            return Ok(Target {
                devtype: m.devtype,
                predicates: vec![Predicate {
                    attribute: "deviceId".into(),
                    value: name.to_string(),
                }],
            });
        }
        if self.registry.manifests().iter().any(|m| m.devtype == name) {
            return Ok(Target {
                devtype: name.to_string(),
                predicates: Vec::new(),
            });
        }
        Err(RuntimeError::UnknownDevSet(name.to_string()))
    }

    fn resolve(&self, target: &Target) -> Result<DevSet, DeviceError> {
        self.registry.resolve_devset(&target.devtype, &target.predicates)
    }

    /// Parses and executes one statement for `client`.
    pub fn submit(&self, client: &str, text: &str) -> Result<Submission, RuntimeError> {
        let query = parse_query(text)?;
        self.submit_query(client, query)
    }

    pub fn submit_query(&self, client: &str, query: Query) -> Result<Submission, RuntimeError> {
        match query {
            Query::Find(spec) => {
                let target = Target {
                    devtype: spec.devtype.clone(),
                    predicates: spec.predicates.clone(),
                };
                let mut devset = self.resolve(&target)?;
                devset.name = spec.alias.clone();
                self.aliases
                    .lock()
                    .unwrap()
                    .insert((client.to_string(), spec.alias), target);
                Ok(Submission::Found { devset })
            }
            Query::Denature(spec) => {
                self.mediator.set_policy(&spec.sensor_id, client, spec.rules)?;
                Ok(Submission::Ack {
                    message: format!("policy set on {}", spec.sensor_id),
                })
            }
            Query::GatewayImport(spec) => {
                let devices = crate::gateway::import_gateway(self, &spec.url, spec.token.as_deref())
                    .map_err(|e| RuntimeError::Gateway(e.to_string()))?;
                Ok(Submission::Imported { devices })
            }
            q @ (Query::Sense(_) | Query::Actuate(_) | Query::Event(_)) => {
                let mut task = self.compile(q, client)?;
                if task.period == 0 && task.kind != TaskKind::Event {
                    let id = task.task_id.clone();
                    let result = self.run(&mut task, self.now());
                    task.status = TaskStatus::Completed;
                    task.fires = 1;
                    self.tasks.lock().unwrap().insert(self.seq_of(&id), task);
                    Ok(Submission::Result {
                        result: result.expect("one-shot tasks always produce a result"),
                    })
                } else {
                    let id = task.task_id.clone();
                    self.tasks.lock().unwrap().insert(self.seq_of(&id), task);
                    Ok(Submission::Scheduled { task_id: id })
                }
            }
        }
    }

    fn seq_of(&self, task_id: &str) -> u64 {
        task_id[self.id_prefix.len()..].parse().unwrap_or(0)
    }

    /// Builds a task for a SENSE, ACTUATE or EVENT statement.
    pub fn compile(&self, query: Query, client: &str) -> Result<Task, RuntimeError> {
        let (kind, target_name, period, deadline) = match &query {
            Query::Sense(s) => (TaskKind::Sense, s.target.clone(), s.period, s.deadline),
            Query::Actuate(a) => (TaskKind::Actuate, a.target.clone(), a.period, a.deadline),
            Query::Event(e) => match &e.trigger {
                Trigger::Condition { target, .. } => (TaskKind::Event, target.clone(), None, e.body.deadline),
                Trigger::Periodic { period } => (TaskKind::Event, e.body.target.clone(), Some(*period), e.body.deadline),
            },
            other => return Err(RuntimeError::UnknownTask(format!("{:?} is not schedulable", other.kind()))),
        };
        let target = self.target_of(client, &target_name)?;
        let devset = self.resolve(&target)?;
        if let Query::Event(e) = &query {
            // the body's devset must resolve too
            let body_target = self.target_of(client, &e.body.target)?;
            self.resolve(&body_target)?;
        }
        let seq = self.next_id.fetch_add(1, Ordering::SeqCst);
        let now = self.now();
        Ok(Task {
            task_id: format!("{}{seq}", self.id_prefix),
            client_id: client.to_string(),
            kind,
            query,
            target,
            devset,
            period: period.unwrap_or(0),
            deadline: deadline.unwrap_or(0),
            start: now,
            fires: 0,
            next_fire: now,
            status: TaskStatus::Active,
            last_condition: false,
        })
    }

    /// Evaluation tick: min(1 s, shortest active period).
    pub fn eval_tick(&self) -> Millis {
        self.tasks
            .lock()
            .unwrap()
            .values()
            .filter(|t| t.status == TaskStatus::Active && t.period > 0)
            .map(|t| t.period)
            .fold(MAX_EVAL_TICK_MS, Millis::min)
    }

    /// Fires every due task. Event evaluations that do not trigger produce
    /// no result.
    pub fn tick(&self) -> Vec<(String, TaskResult)> {
        let now = self.now();
        let tick = self.eval_tick();
        let due: Vec<Task> = self
            .tasks
            .lock()
            .unwrap()
            .values()
            .filter(|t| t.status == TaskStatus::Active && t.next_fire <= now)
            .cloned()
            .collect();
        let mut out = Vec::new();
        for task in due {
            let seq = self.seq_of(&task.task_id);
            // re-check under the lock: a cancel may have landed meanwhile
            let mut current = {
                let tasks = self.tasks.lock().unwrap();
                match tasks.get(&seq) {
                    Some(t) if t.status == TaskStatus::Active => t.clone(),
                    _ => continue,
                }
            };
            let result = self.run(&mut current, now);
            current.fires += 1;
            let step = if current.period > 0 { current.period } else { tick };
            // anchor to start so late ticks never accumulate drift
            let n = (now.saturating_sub(current.start)) / step + 1;
            current.next_fire = current.start + n * step;
            let mut tasks = self.tasks.lock().unwrap();
            if let Some(t) = tasks.get_mut(&seq) {
                if t.status != TaskStatus::Active {
                    continue;
                }
                *t = current.clone();
            }
            drop(tasks);
            if let Some(r) = result {
                out.push((current.client_id.clone(), r));
            }
        }
        out
    }

    /// Time of the earliest pending fire.
    pub fn next_due(&self) -> Option<Millis> {
        self.tasks
            .lock()
            .unwrap()
            .values()
            .filter(|t| t.status == TaskStatus::Active)
            .map(|t| t.next_fire)
            .min()
    }

    /// Fires one task now, regardless of its schedule.
    pub fn fire(&self, task_id: &str) -> Result<Option<TaskResult>, RuntimeError> {
        let seq = self.seq_of(task_id);
        let mut task = self
            .tasks
            .lock()
            .unwrap()
            .get(&seq)
            .filter(|t| t.status == TaskStatus::Active)
            .cloned()
            .ok_or_else(|| RuntimeError::UnknownTask(task_id.to_string()))?;
        let r = self.run(&mut task, self.now());
        if let Some(t) = self.tasks.lock().unwrap().get_mut(&seq) {
            t.last_condition = task.last_condition;
        }
        Ok(r)
    }

    fn run(&self, task: &mut Task, now: Millis) -> Option<TaskResult> {
        let query = task.query.clone();
        match &query {
            Query::Sense(spec) => Some(self.run_sense(task, spec, now)),
            Query::Actuate(spec) => Some(self.run_actuate(task, &task.target.clone(), spec, now)),
            Query::Event(ev) => match &ev.trigger {
                Trigger::Periodic { .. } => {
                    let body_target = self.target_of(&task.client_id, &ev.body.target).ok()?;
                    Some(self.run_actuate(task, &body_target, &ev.body, now))
                }
                Trigger::Condition {
                    property,
                    comparator,
                    threshold,
                    ..
                } => {
                    let holds = self.evaluate_condition(task, property, |v| comparator.holds(v, *threshold), now);
                    let rising = holds && !task.last_condition;
                    task.last_condition = holds;
                    if !rising {
                        return None;
                    }
                    let body_target = self.target_of(&task.client_id, &ev.body.target).ok()?;
                    Some(self.run_actuate(task, &body_target, &ev.body, now))
                }
            },
            _ => None,
        }
    }

    fn evaluate_condition(&self, task: &Task, property: &str, pred: impl Fn(f64) -> bool, now: Millis) -> bool {
        let Ok(devset) = self.resolve(&task.target) else {
            return false;
        };
        let sel = self.registry.select_device(&devset, 1);
        let Some(id) = sel.devices.first() else {
            return false;
        };
        let reading = self.registry.sense(id, property, now);
        let (holds, outcome, latency) = match &reading {
            Ok(r) => {
                let v = r.value.as_ref().and_then(Value::as_f64);
                (v.is_some_and(&pred), format!("cond={}", v.is_some_and(&pred)), r.latency_ms)
            }
            Err(e) => (false, TraceLine::outcome_text(&Outcome::Error(e.to_string())), 0),
        };
        self.trace.push(TraceLine {
            ts: now,
            task_id: task.task_id.clone(),
            kind: TaskKind::Event,
            device_id: id.clone(),
            served_by: Some(self.served_by_device(id)),
            latency_ms: latency,
            outcome,
        });
        holds
    }

    fn served_by_device(&self, id: &str) -> ServedBy {
        match self.registry.driver_kind(id) {
            Some(DriverKind::Gateway) => ServedBy::Gateway,
            _ => ServedBy::Device,
        }
    }

    fn cache_state(&self, device: &str, property: &str) -> Result<Arc<Mutex<CacheState>>, String> {
        let key = CacheKey::new(device, property);
        self.cache
            .get_or_insert_with(&key, || {
                let manifest = self
                    .registry
                    .manifest(device)
                    .ok_or(crate::cache::CacheError::UnknownModel(device.into()))?;
                let ty = manifest
                    .property(property)
                    .map(|p| p.datatype)
                    .ok_or_else(|| crate::cache::CacheError::TypeMismatch(format!("no property {property}")))?;
                let model = self.models.build(&default_model(&manifest))?;
                Ok(CacheState::new(
                    key.clone(),
                    model,
                    self.adapters.for_type(ty),
                    CachePolicy::default(),
                ))
            })
            .map_err(|e| e.to_string())
    }

    /// One SENSE subtask: cache lookup (falling through to the device), then
    /// privacy mediation.
    fn sense_one(&self, task: &Task, spec: &SenseSpec, device: &str, now: Millis) -> DeviceOutcome {
        let mut served = self.served_by_device(device);
        let latency = std::cell::Cell::new(0);
        let fetched: Result<Value, String> = match self.cache_state(device, &spec.property) {
            Err(e) => Err(e),
            Ok(state) => {
                let mut st = state.lock().unwrap();
                st.policy = CachePolicy {
                    delta: spec.delta,
                    error: spec.error,
                };
                let read = || {
                    let r = self.registry.sense(device, &spec.property, now)?;
                    latency.set(r.latency_ms);
                    r.value.ok_or_else(|| DeviceError::UnknownProperty(spec.property.clone()))
                };
                match st.lookup(now, read) {
                    Ok(s) => {
                        if s.served_by == CacheServed::Cache {
                            served = ServedBy::Cache;
                        }
                        Ok(s.value)
                    }
                    Err(LookupError::Device(e)) => Err(e.to_string()),
                    Err(LookupError::Cache(e)) => Err(e.to_string()),
                }
            }
        };
        let outcome = match fetched {
            Err(e) => Outcome::Error(e),
            Ok(v) => {
                self.mediations.fetch_add(1, Ordering::SeqCst);
                match self.mediator.apply_policy(device, &task.client_id, &spec.property, v) {
                    Ok(Mediated::Release(v)) => Outcome::Value(v),
                    Ok(Mediated::Blocked) => Outcome::Blocked,
                    Err(e) => Outcome::Error(e.to_string()),
                }
            }
        };
        DeviceOutcome {
            device_id: device.to_string(),
            outcome,
            served_by: Some(served),
            latency_ms: latency.get(),
        }
    }

    fn run_sense(&self, task: &Task, spec: &SenseSpec, now: Millis) -> TaskResult {
        let k = spec.cardinality as usize;
        let (devices, short) = match self.resolve(&task.target) {
            Ok(set) => {
                let sel = self.registry.select_device(&set, k);
                (sel.devices, sel.short)
            }
            Err(_) => (Vec::new(), true),
        };
        let per_device: Vec<DeviceOutcome> = if devices.len() <= 1 {
            devices.iter().map(|d| self.sense_one(task, spec, d, now)).collect()
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = devices
                    .iter()
                    .map(|d| s.spawn(move || self.sense_one(task, spec, d, now)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("subtask panicked")).collect()
            })
        };
        self.finish(task, TaskKind::Sense, now, per_device, short)
    }

    fn actuate_one(&self, spec: &ActuateSpec, device: &str, now: Millis) -> DeviceOutcome {
        let served = self.served_by_device(device);
        let started = std::time::Instant::now();
        let r = self.registry.actuate(device, &spec.action, &spec.params, now);
        let (outcome, latency) = match r {
            Ok(reading) => (Outcome::Ack, reading.latency_ms),
            Err(e) => (Outcome::Error(e.to_string()), started.elapsed().as_millis() as Millis),
        };
        DeviceOutcome {
            device_id: device.to_string(),
            outcome,
            served_by: Some(served),
            latency_ms: latency,
        }
    }

    fn run_actuate(&self, task: &Task, target: &Target, spec: &ActuateSpec, now: Millis) -> TaskResult {
        let k = spec.cardinality as usize;
        let (devices, short) = match self.resolve(target) {
            Ok(set) => {
                let sel = self.registry.select_device(&set, k);
                (sel.devices, sel.short)
            }
            Err(_) => (Vec::new(), true),
        };
        let per_device: Vec<DeviceOutcome> = if devices.len() <= 1 {
            devices.iter().map(|d| self.actuate_one(spec, d, now)).collect()
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = devices
                    .iter()
                    .map(|d| s.spawn(move || self.actuate_one(spec, d, now)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("subtask panicked")).collect()
            })
        };
        self.finish(task, task.kind, now, per_device, short)
    }

    fn finish(&self, task: &Task, kind: TaskKind, now: Millis, per_device: Vec<DeviceOutcome>, short: bool) -> TaskResult {
        for d in &per_device {
            self.trace.push(TraceLine {
                ts: now,
                task_id: task.task_id.clone(),
                kind,
                device_id: d.device_id.clone(),
                served_by: d.served_by,
                latency_ms: d.latency_ms,
                outcome: TraceLine::outcome_text(&d.outcome),
            });
        }
        let max_latency = per_device.iter().map(|d| d.latency_ms).max().unwrap_or(0);
        TaskResult {
            task_id: task.task_id.clone(),
            time: now,
            deadline_met: task.deadline == 0 || max_latency <= task.deadline,
            per_device,
            short,
        }
    }

    /// Cancels every active task of `client`.
    pub fn cancel_client(&self, client: &str) -> usize {
        let mut n = 0;
        for t in self.tasks.lock().unwrap().values_mut() {
            if t.client_id == client && t.status == TaskStatus::Active {
                t.status = TaskStatus::Cancelled;
                n += 1;
            }
        }
        self.aliases.lock().unwrap().retain(|(c, _), _| c != client);
        n
    }

    pub fn cancel_task(&self, client: &str, task_id: &str) -> Result<(), RuntimeError> {
        let seq = self.seq_of(task_id);
        let mut tasks = self.tasks.lock().unwrap();
        match tasks.get_mut(&seq) {
            Some(t) if t.client_id == client && t.task_id == task_id => {
                if t.status == TaskStatus::Active {
                    t.status = TaskStatus::Cancelled;
                }
                Ok(())
            }
            _ => Err(RuntimeError::UnknownTask(task_id.to_string())),
        }
    }

    pub fn task(&self, task_id: &str) -> Option<Task> {
        let seq = self.seq_of(task_id);
        self.tasks.lock().unwrap().get(&seq).filter(|t| t.task_id == task_id).cloned()
    }

    pub fn tasks(&self, client: Option<&str>) -> Vec<TaskInfo> {
        self.tasks
            .lock()
            .unwrap()
            .values()
            .filter(|t| client.is_none_or(|c| t.client_id == c))
            .map(|t| TaskInfo {
                task_id: t.task_id.clone(),
                client_id: t.client_id.clone(),
                kind: t.kind,
                period: t.period,
                status: t.status,
                fires: t.fires,
                next_fire: t.next_fire,
            })
            .collect()
    }
}
