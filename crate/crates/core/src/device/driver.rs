//! Driver contract and the built-in simulated driver.

use std::collections::BTreeMap;

use super::manifest::{DeviceManifest, Effect};
use super::sim::Signal;
use super::DeviceError;
use crate::value::{DataType, Image, Value};
use crate::Millis;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriverKind {
    Virtual,
    Gateway,
}

pub trait DeviceDriver: Send {
    fn kind(&self) -> DriverKind {
        DriverKind::Virtual
    }
    fn sense(&mut self, property: &str, now: Millis) -> Result<Value, DeviceError>;
    fn actuate(&mut self, action: &str, params: &[(String, String)], now: Millis) -> Result<(), DeviceError>;
    fn write_property(&mut self, property: &str, _value: Value) -> Result<(), DeviceError> {
        Err(DeviceError::ReadOnly(property.to_string()))
    }
    /// Wall time of the last call when the driver measures it.
    fn measured_latency(&self) -> Option<Millis> {
        None
    }
}

pub fn default_value(ty: DataType) -> Value {
    match ty {
        DataType::Double => Value::Double(0.0),
        DataType::CartesianCoordinates => Value::Coordinates { x: 0.0, y: 0.0 },
        DataType::Image => Value::Image(Image::filled(1, 1, [0, 0, 0])),
        DataType::Boolean => Value::Bool(false),
        DataType::Text => Value::Text(String::new()),
    }
}

/// Simulated device: properties follow their manifest signal until an
/// action or write overrides them.
pub struct VirtualDriver {
    manifest: DeviceManifest,
    state: BTreeMap<String, Value>,
    signals: BTreeMap<String, Signal>,
}

impl VirtualDriver {
    pub fn new(manifest: &DeviceManifest) -> Self {
        let state = manifest
            .properties
            .iter()
            .filter(|p| !manifest.simulation.contains_key(&p.name))
            .map(|p| (p.name.clone(), p.initial.clone().unwrap_or_else(|| default_value(p.datatype))))
            .collect();
        Self {
            manifest: manifest.clone(),
            state,
            signals: manifest.simulation.clone(),
        }
    }

    fn set(&mut self, property: &str, value: Value) {
        self.signals.remove(property);
        self.state.insert(property.to_string(), value);
    }
}

impl DeviceDriver for VirtualDriver {
    fn sense(&mut self, property: &str, now: Millis) -> Result<Value, DeviceError> {
        if let Some(sig) = self.signals.get(property) {
            return Ok(sig.sample(now));
        }
        self.state
            .get(property)
            .cloned()
            .ok_or_else(|| DeviceError::UnknownProperty(property.to_string()))
    }

    fn actuate(&mut self, action: &str, params: &[(String, String)], _now: Millis) -> Result<(), DeviceError> {
        let spec = self
            .manifest
            .action(action)
            .ok_or_else(|| DeviceError::UnknownAction(action.to_string()))?
            .clone();
        let mut updates = Vec::new();
        for (prop, effect) in &spec.effects {
            let ty = self.manifest.property(prop).map(|p| p.datatype).unwrap_or(DataType::Text);
            let value = match effect {
                Effect::Set(v) => v.clone(),
                Effect::Param { param } => {
                    let (_, text) = params
                        .iter()
                        .find(|(k, _)| k == param)
                        .ok_or_else(|| DeviceError::BadParams(format!("missing param {param}")))?;
                    Value::parse_as(text, ty)
                        .ok_or_else(|| DeviceError::BadParams(format!("{param}={text} is not a {}", ty.name())))?
                }
            };
            updates.push((prop.clone(), value));
        }
        for (prop, value) in updates {
            self.set(&prop, value);
        }
        Ok(())
    }

    fn write_property(&mut self, property: &str, value: Value) -> Result<(), DeviceError> {
        let spec = self
            .manifest
            .property(property)
            .ok_or_else(|| DeviceError::UnknownProperty(property.to_string()))?;
        if !spec.writable {
            return Err(DeviceError::ReadOnly(property.to_string()));
        }
        if value.data_type() != spec.datatype {
            return Err(DeviceError::BadParams(format!(
                "{property} expects {}",
                spec.datatype.name()
            )));
        }
        self.set(property, value);
        Ok(())
    }
}
