//! WebThings-style gateway: mock server, HTTP client, and mirror devices.

mod client;
mod server;
mod thing;

pub use client::GatewayClient;
pub use server::{GatewayServer, MockGateway};
pub use thing::{param_text, value_from_json, ThingAction, ThingDescription, ThingProperty};

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use crate::device::{ActionSpec, DeviceDriver, DeviceError, DeviceManifest, DriverKind, PropertySpec};
use crate::runtime::Engine;
use crate::value::{DataType, Value};
use crate::Millis;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("gateway unreachable: {0}")]
    Unreachable(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("unauthorized")]
    Unauthorized,
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid thing: {0}")]
    Invalid(String),
}

impl GatewayError {
    pub fn status(&self) -> u16 {
        match self {
            GatewayError::NotFound(_) => 404,
            GatewayError::BadRequest(_) | GatewayError::Invalid(_) => 400,
            GatewayError::Unauthorized => 401,
            _ => 500,
        }
    }
}

/// Driver whose every operation is a gateway call.
pub struct MirrorDriver {
    client: GatewayClient,
    thing_id: String,
    types: BTreeMap<String, DataType>,
    last_latency: Option<Millis>,
    calls: Arc<AtomicU64>,
}

impl MirrorDriver {
    pub fn new(client: GatewayClient, thing: &ThingDescription) -> Self {
        Self {
            client,
            thing_id: thing.id.clone(),
            types: thing
                .properties
                .keys()
                .filter_map(|k| thing.property_type(k).map(|t| (k.clone(), t)))
                .collect(),
            last_latency: None,
            calls: Arc::new(AtomicU64::new(0)),
        }
    }

    /// Shared counter of gateway calls made by this driver.
    pub fn call_counter(&self) -> Arc<AtomicU64> {
        self.calls.clone()
    }

    fn timed<T>(&mut self, f: impl FnOnce(&GatewayClient) -> Result<T, GatewayError>) -> Result<T, DeviceError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let start = Instant::now();
        let r = f(&self.client);
        self.last_latency = Some(start.elapsed().as_millis() as Millis);
        r.map_err(|e| match e {
            GatewayError::NotFound(m) => DeviceError::UnknownProperty(m),
            other => DeviceError::Gateway(other.to_string()),
        })
    }
}

impl DeviceDriver for MirrorDriver {
    fn kind(&self) -> DriverKind {
        DriverKind::Gateway
    }

    fn sense(&mut self, property: &str, _now: Millis) -> Result<Value, DeviceError> {
        let ty = *self
            .types
            .get(property)
            .ok_or_else(|| DeviceError::UnknownProperty(property.to_string()))?;
        let id = self.thing_id.clone();
        let json = self.timed(|c| c.get_property(&id, property))?;
        value_from_json(&json, ty)
            .ok_or_else(|| DeviceError::Gateway(format!("{property} is not a {}", ty.name())))
    }

    fn actuate(&mut self, action: &str, params: &[(String, String)], _now: Millis) -> Result<(), DeviceError> {
        let id = self.thing_id.clone();
        self.timed(|c| c.invoke_action(&id, action, params))
    }

    fn write_property(&mut self, property: &str, value: Value) -> Result<(), DeviceError> {
        let id = self.thing_id.clone();
        self.timed(|c| c.put_property(&id, property, &value))
    }

    fn measured_latency(&self) -> Option<Millis> {
        self.last_latency
    }
}

pub fn mirror_id(url: &str, thing_id: &str) -> String {
    format!("{}#{thing_id}", url.trim_end_matches('/'))
}

fn devtype_for(thing: &ThingDescription) -> String {
    if crate::cql::is_identifier(&thing.devtype) {
        return thing.devtype.clone();
    }
    let cleaned: String = thing.title.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
    if crate::cql::is_identifier(&cleaned) {
        cleaned
    } else {
        format!("Thing{cleaned}")
    }
}

/// Device manifest describing a mirror of `thing`.
pub fn mirror_manifest(url: &str, thing: &ThingDescription) -> Result<DeviceManifest, GatewayError> {
    let url = url.trim_end_matches('/');
    let mut properties = Vec::new();
    for (name, p) in &thing.properties {
        let datatype = DataType::from_thing_type(&p.ty)
            .ok_or_else(|| GatewayError::Invalid(format!("{}.{name}: unknown type {}", thing.id, p.ty)))?;
        properties.push(PropertySpec {
            name: name.clone(),
            datatype,
            units: p.unit.clone(),
            writable: p.writable,
            initial: None,
        });
    }
    let actions = thing
        .actions
        .iter()
        .map(|(name, a)| ActionSpec {
            name: name.clone(),
            params: a.params.clone(),
            effects: BTreeMap::new(),
        })
        .collect();
    let mut attributes = BTreeMap::new();
    attributes.insert("gateway".to_string(), url.to_string());
    attributes.insert("thingId".to_string(), thing.id.clone());
    attributes.insert("title".to_string(), thing.title.clone());
    let manifest = DeviceManifest {
        device_id: mirror_id(url, &thing.id),
        devtype: devtype_for(thing),
        attributes,
        properties,
        actions,
        energy_class: Default::default(),
        energy_profile: None,
        battery_capacity: None,
        cache_model: None,
        owner: None,
        idle_timeout_ms: None,
        wake_latency_ms: None,
        latency_ms: 0,
        simulation: BTreeMap::new(),
    };
    manifest
        .validate()
        .map_err(|e| GatewayError::Invalid(format!("{}: {e}", thing.id)))?;
    Ok(manifest)
}

/// Registers one mirror device per thing on the gateway. Re-importing the
/// same URL replaces existing mirrors and drops mirrors of things that are
/// gone. Nothing is registered unless every thing converts.
pub fn import_gateway(engine: &Engine, url: &str, token: Option<&str>) -> Result<Vec<String>, GatewayError> {
    let client = GatewayClient::new(url, token);
    let things = client.things()?;
    let mirrors: Vec<(DeviceManifest, MirrorDriver)> = things
        .iter()
        .map(|t| Ok((mirror_manifest(client.base_url(), t)?, MirrorDriver::new(client.clone(), t))))
        .collect::<Result<_, GatewayError>>()?;
    let base = client.base_url().to_string();
    let ids: Vec<String> = mirrors.iter().map(|(m, _)| m.device_id.clone()).collect();
    for stale in engine
        .registry
        .manifests()
        .into_iter()
        .filter(|m| m.attributes.get("gateway") == Some(&base) && !ids.contains(&m.device_id))
    {
        engine.remove_device(&stale.device_id);
    }
    let mut added: Vec<String> = Vec::new();
    for (manifest, driver) in mirrors {
        let id = manifest.device_id.clone();
        let fresh = !engine.registry.contains(&id);
        if let Err(e) = engine.add_device_with_driver(manifest, Box::new(driver)) {
            for a in &added {
                engine.remove_device(a);
            }
            return Err(GatewayError::Invalid(e.to_string()));
        }
        if fresh {
            added.push(id);
        }
    }
    Ok(ids)
}

#[cfg(test)]
mod tests;
