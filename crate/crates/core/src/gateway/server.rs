//! Mock gateway: hosts manifest-defined things over the HTTP protocol.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Instant;

use tiny_http::{Header, Method, Request, Response, Server};

use super::thing::{param_text, value_from_json, ThingAction, ThingDescription, ThingProperty};
use super::GatewayError;
use crate::device::{DeviceDriver, DeviceError, DeviceManifest, VirtualDriver};
use crate::value::Value;
use crate::Millis;

struct Thing {
    manifest: DeviceManifest,
    driver: Mutex<VirtualDriver>,
}

/// Gateway state, usable in-process or behind [`GatewayServer`].
pub struct MockGateway {
    things: BTreeMap<String, Thing>,
    token: Option<String>,
    started: Instant,
    requests: AtomicU64,
}

impl MockGateway {
    pub fn new(manifests: Vec<DeviceManifest>, token: Option<String>) -> Self {
        let things = manifests
            .into_iter()
            .map(|m| {
                let driver = Mutex::new(VirtualDriver::new(&m));
                (m.device_id.clone(), Thing { manifest: m, driver })
            })
            .collect();
        Self {
            things,
            token,
            started: Instant::now(),
            requests: AtomicU64::new(0),
        }
    }

    fn now(&self) -> Millis {
        self.started.elapsed().as_millis() as Millis
    }

    /// Requests served over HTTP so far.
    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    fn thing(&self, id: &str) -> Result<&Thing, GatewayError> {
        self.things
            .get(id)
            .ok_or_else(|| GatewayError::NotFound(format!("thing {id}")))
    }

    fn describe(&self, thing: &Thing) -> ThingDescription {
        let now = self.now();
        let mut driver = thing.driver.lock().unwrap();
        ThingDescription {
            id: thing.manifest.device_id.clone(),
            title: ThingDescription::title_of(&thing.manifest),
            devtype: thing.manifest.devtype.clone(),
            properties: thing
                .manifest
                .properties
                .iter()
                .map(|p| {
                    let value = driver
                        .sense(&p.name, now)
                        .unwrap_or_else(|_| crate::device::default_value(p.datatype));
                    (
                        p.name.clone(),
                        ThingProperty {
                            ty: p.datatype.thing_type().to_string(),
                            value,
                            writable: p.writable,
                            unit: p.units.clone(),
                        },
                    )
                })
                .collect(),
            actions: thing
                .manifest
                .actions
                .iter()
                .map(|a| (a.name.clone(), ThingAction { params: a.params.clone() }))
                .collect(),
        }
    }

    pub fn ledger(&self) -> Vec<ThingDescription> {
        self.things.values().map(|t| self.describe(t)).collect()
    }

    pub fn get_property(&self, id: &str, name: &str) -> Result<Value, GatewayError> {
        let thing = self.thing(id)?;
        if thing.manifest.property(name).is_none() {
            return Err(GatewayError::NotFound(format!("property {name}")));
        }
        let v = thing.driver.lock().unwrap().sense(name, self.now());
        v.map_err(|e| GatewayError::BadRequest(e.to_string()))
    }

    pub fn put_property(&self, id: &str, name: &str, value: Value) -> Result<(), GatewayError> {
        let thing = self.thing(id)?;
        if thing.manifest.property(name).is_none() {
            return Err(GatewayError::NotFound(format!("property {name}")));
        }
        let r = thing.driver.lock().unwrap().write_property(name, value);
        r.map_err(|e| GatewayError::BadRequest(e.to_string()))
    }

    pub fn invoke_action(&self, id: &str, action: &str, params: &[(String, String)]) -> Result<(), GatewayError> {
        let thing = self.thing(id)?;
        let spec = thing
            .manifest
            .action(action)
            .ok_or_else(|| GatewayError::NotFound(format!("action {action}")))?;
        if let Some((k, _)) = params.iter().find(|(k, _)| !spec.params.contains(k)) {
            return Err(GatewayError::BadRequest(format!("unknown parameter {k}")));
        }
        let r = thing.driver.lock().unwrap().actuate(action, params, self.now());
        r.map_err(|e| match e {
            DeviceError::UnknownAction(a) => GatewayError::NotFound(a),
            other => GatewayError::BadRequest(other.to_string()),
        })
    }

    fn authorized(&self, req: &Request) -> bool {
        let Some(token) = &self.token else { return true };
        req.headers().iter().any(|h| {
            h.field.equiv("Authorization") && h.value.as_str().strip_prefix("Bearer ") == Some(token.as_str())
        })
    }

    fn route(&self, method: &Method, path: &str, body: &str) -> Result<(u16, serde_json::Value), GatewayError> {
        let segments: Vec<&str> = path.trim_matches('/').split('/').collect();
        let parse_body = || -> Result<serde_json::Map<String, serde_json::Value>, GatewayError> {
            match serde_json::from_str(body) {
                Ok(serde_json::Value::Object(m)) => Ok(m),
                _ => Err(GatewayError::BadRequest("body must be a JSON object".into())),
            }
        };
        match (method, segments.as_slice()) {
            (Method::Get, ["things"]) => Ok((200, serde_json::to_value(self.ledger()).unwrap())),
            (Method::Get, ["things", id]) => {
                let thing = self.thing(id)?;
                Ok((200, serde_json::to_value(self.describe(thing)).unwrap()))
            }
            (Method::Get, ["things", id, "properties", name]) => {
                let v = self.get_property(id, name)?;
                Ok((200, serde_json::json!({ *name: v })))
            }
            (Method::Put, ["things", id, "properties", name]) => {
                let thing = self.thing(id)?;
                let spec = thing
                    .manifest
                    .property(name)
                    .ok_or_else(|| GatewayError::NotFound(format!("property {name}")))?;
                let map = parse_body()?;
                let raw = map
                    .get(*name)
                    .ok_or_else(|| GatewayError::BadRequest(format!("body lacks {name}")))?;
                let value = value_from_json(raw, spec.datatype)
                    .ok_or_else(|| GatewayError::BadRequest(format!("{name} expects {}", spec.datatype.thing_type())))?;
                self.put_property(id, name, value.clone())?;
                Ok((200, serde_json::json!({ *name: value })))
            }
            (Method::Post, ["things", id, "actions", name]) => {
                let map = if body.trim().is_empty() { Default::default() } else { parse_body()? };
                let params: Vec<(String, String)> = match map.get(*name) {
                    None | Some(serde_json::Value::Null) => Vec::new(),
                    Some(serde_json::Value::Object(input)) => {
                        input.iter().map(|(k, v)| (k.clone(), param_text(v))).collect()
                    }
                    Some(_) => return Err(GatewayError::BadRequest("action input must be an object".into())),
                };
                self.invoke_action(id, name, &params)?;
                Ok((200, serde_json::json!({ *name: { "status": "completed" } })))
            }
            _ => Err(GatewayError::NotFound(path.to_string())),
        }
    }

    fn handle(&self, mut req: Request) {
        self.requests.fetch_add(1, Ordering::SeqCst);
        let (status, json) = if !self.authorized(&req) {
            (401, serde_json::json!({ "error": "unauthorized" }))
        } else {
            let mut body = String::new();
            let _ = req.as_reader().read_to_string(&mut body);
            let path = req.url().split('?').next().unwrap_or("").to_string();
            match self.route(req.method(), &path, &body) {
                Ok(ok) => ok,
                Err(e) => (e.status(), serde_json::json!({ "error": e.to_string() })),
            }
        };
        let header = Header::from_bytes("Content-Type", "application/json").unwrap();
        let resp = Response::from_string(json.to_string())
            .with_status_code(status)
            .with_header(header);
        let _ = req.respond(resp);
    }
}

/// Running HTTP front end for a [`MockGateway`].
pub struct GatewayServer {
    pub gateway: Arc<MockGateway>,
    server: Arc<Server>,
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
}

impl GatewayServer {
    pub fn start(gateway: MockGateway, listen: &str) -> Result<Self, GatewayError> {
        let server = Server::http(listen).map_err(|e| GatewayError::Unreachable(format!("bind {listen}: {e}")))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| GatewayError::Unreachable("not an IP listener".into()))?;
        let server = Arc::new(server);
        let gateway = Arc::new(gateway);
        let stop = Arc::new(AtomicBool::new(false));
        let workers = (0..4)
            .map(|_| {
                let (server, gateway, stop) = (server.clone(), gateway.clone(), stop.clone());
                std::thread::spawn(move || {
                    while !stop.load(Ordering::SeqCst) {
                        match server.recv() {
                            Ok(req) => gateway.handle(req),
                            Err(_) => break,
                        }
                    }
                })
            })
            .collect();
        Ok(Self {
            gateway,
            server,
            addr,
            stop,
            workers,
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks the calling thread until the server stops.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_workers();
    }

    fn stop_workers(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for GatewayServer {
    fn drop(&mut self) {
        self.stop_workers();
    }
}
