//! Device manifest documents (JSON).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sim::Signal;
use crate::cache::{ModelRegistry, ModelSpec};
use crate::value::{DataType, Value};
use crate::Millis;

pub const DEFAULT_IDLE_TIMEOUT_MS: Millis = 30_000;
pub const DEFAULT_WAKE_LATENCY_MS: Millis = 500;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("manifest field `{field}`: {message}")]
pub struct ManifestError {
    pub field: String,
    pub message: String,
}

impl ManifestError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub enum EnergyClass {
    #[default]
    NonEnergyAware,
    Metered,
    Sleepy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertySpec {
    pub name: String,
    pub datatype: DataType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
    #[serde(default)]
    pub writable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Value>,
}

/// What an action does to the device's own properties: set a literal or
/// copy one of the action's parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Effect {
    Param { param: String },
    Set(Value),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSpec {
    pub name: String,
    #[serde(default)]
    pub params: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub effects: BTreeMap<String, Effect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct DeviceManifest {
    pub device_id: String,
    pub devtype: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
    #[serde(default)]
    pub properties: Vec<PropertySpec>,
    #[serde(default)]
    pub actions: Vec<ActionSpec>,
    #[serde(default)]
    pub energy_class: EnergyClass,
    /// Operation name (`Sense`, `Actuate` or a specific action) → cost.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_profile: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub battery_capacity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idle_timeout_ms: Option<Millis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wake_latency_ms: Option<Millis>,
    /// Simulated per-operation latency.
    #[serde(default)]
    pub latency_ms: Millis,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub simulation: BTreeMap<String, Signal>,
}

impl DeviceManifest {
    pub fn property(&self, name: &str) -> Option<&PropertySpec> {
        self.properties.iter().find(|p| p.name == name)
    }

    pub fn action(&self, name: &str) -> Option<&ActionSpec> {
        self.actions.iter().find(|a| a.name == name)
    }

    pub fn idle_timeout(&self) -> Millis {
        self.idle_timeout_ms.unwrap_or(DEFAULT_IDLE_TIMEOUT_MS)
    }

    pub fn wake_latency(&self) -> Millis {
        self.wake_latency_ms.unwrap_or(DEFAULT_WAKE_LATENCY_MS)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.device_id.is_empty() || self.device_id.chars().any(char::is_whitespace) {
            return Err(ManifestError::new("deviceId", "must be nonempty without whitespace"));
        }
        if !crate::cql::is_identifier(&self.devtype) {
            return Err(ManifestError::new("devtype", format!("`{}` is not an identifier", self.devtype)));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, p) in self.properties.iter().enumerate() {
            let field = format!("properties[{i}].name");
            if p.name.is_empty() || p.name.chars().any(char::is_whitespace) {
                return Err(ManifestError::new(field, "must be nonempty without whitespace"));
            }
            if !seen.insert(p.name.as_str()) {
                return Err(ManifestError::new(field, format!("duplicate property {}", p.name)));
            }
            if let Some(v) = &p.initial {
                if v.data_type() != p.datatype {
                    return Err(ManifestError::new(
                        format!("properties[{i}].initial"),
                        format!("expected {}", p.datatype.name()),
                    ));
                }
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, a) in self.actions.iter().enumerate() {
            if a.name.is_empty() || a.name.chars().any(char::is_whitespace) {
                return Err(ManifestError::new(format!("actions[{i}].name"), "must be nonempty without whitespace"));
            }
            if !seen.insert(a.name.as_str()) {
                return Err(ManifestError::new(format!("actions[{i}].name"), format!("duplicate action {}", a.name)));
            }
            for (prop, effect) in &a.effects {
                let field = format!("actions[{i}].effects.{prop}");
                let Some(spec) = self.property(prop) else {
                    return Err(ManifestError::new(field, "unknown property"));
                };
                match effect {
                    Effect::Param { param } if !a.params.contains(param) => {
                        return Err(ManifestError::new(field, format!("unknown param {param}")));
                    }
                    Effect::Set(v) if v.data_type() != spec.datatype => {
                        return Err(ManifestError::new(field, format!("expected {}", spec.datatype.name())));
                    }
                    _ => {}
                }
            }
        }
        if self.energy_class == EnergyClass::Metered {
            match self.battery_capacity {
                None => return Err(ManifestError::new("batteryCapacity", "required for Metered devices")),
                Some(c) if !(c > 0.0 && c.is_finite()) => {
                    return Err(ManifestError::new("batteryCapacity", "must be positive"));
                }
                _ => {}
            }
        }
        if let Some(profile) = &self.energy_profile {
            for (op, cost) in profile {
                if !(*cost >= 0.0 && cost.is_finite()) {
                    return Err(ManifestError::new(format!("energyProfile.{op}"), "cost must be nonnegative"));
                }
            }
        }
        if let Some(spec) = &self.cache_model {
            let models = ModelRegistry::default();
            models
                .build(spec)
                .map_err(|e| ManifestError::new("cacheModel", e.to_string()))?;
        }
        for (prop, signal) in &self.simulation {
            let field = format!("simulation.{prop}");
            let Some(spec) = self.property(prop) else {
                return Err(ManifestError::new(field, "unknown property"));
            };
            if signal.data_type() != spec.datatype {
                return Err(ManifestError::new(field, format!("signal does not produce {}", spec.datatype.name())));
            }
        }
        Ok(())
    }
}

/// Field name quoted in a serde error (`unknown field `x``, `missing field `y``).
fn quoted_field(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}

pub fn load_manifest(document: &str) -> Result<DeviceManifest, ManifestError> {
    let manifest: DeviceManifest = serde_json::from_str(document).map_err(|e| {
        let msg = e.to_string();
        let field = if msg.contains("unknown field") || msg.contains("missing field") {
            quoted_field(&msg).unwrap_or_else(|| "<document>".into())
        } else {
            "<document>".into()
        };
        ManifestError::new(field, msg)
    })?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn load_manifest_file(path: &Path) -> Result<DeviceManifest, ManifestError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ManifestError::new("<file>", format!("{}: {e}", path.display())))?;
    load_manifest(&text)
}

/// Loads every `*.json` manifest in a directory, sorted by file name.
pub fn load_manifest_dir(dir: &Path) -> Result<Vec<DeviceManifest>, ManifestError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| ManifestError::new("<dir>", format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_manifest_file(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const THERMO: &str = r#"{
        "deviceId": "thermo-1",
        "devtype": "Thermometer",
        "attributes": {"location": "room1"},
        "properties": [{"name": "Temperature", "datatype": "Double", "units": "C"}]
    }"#;

    #[test]
    fn thermometer_has_one_property() {
        let m = load_manifest(THERMO).unwrap();
        assert_eq!(m.properties.len(), 1);
        assert_eq!(m.properties[0].datatype, DataType::Double);
        assert_eq!(m.properties[0].units.as_deref(), Some("C"));
        assert_eq!(m.energy_class, EnergyClass::NonEnergyAware);
        assert_eq!(m.idle_timeout(), 30_000);
    }

    #[test]
    fn unknown_field_is_named() {
        let doc = THERMO.replacen("\"devtype\"", "\"colour\": 1, \"devtype\"", 1);
        let err = load_manifest(&doc).unwrap_err();
        assert_eq!(err.field, "colour");
    }

    #[test]
    fn metered_needs_capacity() {
        let doc = THERMO.replacen("\"devtype\"", "\"energyClass\": \"Metered\", \"devtype\"", 1);
        let err = load_manifest(&doc).unwrap_err();
        assert_eq!(err.field, "batteryCapacity");
    }

    #[test]
    fn unknown_model_rejected() {
        let doc = THERMO.replacen("\"devtype\"", "\"cacheModel\": {\"name\": \"Magic\"}, \"devtype\"", 1);
        assert_eq!(load_manifest(&doc).unwrap_err().field, "cacheModel");
    }

    #[test]
    fn effects_are_checked() {
        let doc = r#"{
            "deviceId": "l1", "devtype": "Light",
            "properties": [{"name": "OnOff", "datatype": "Boolean", "writable": true}],
            "actions": [{"name": "TurnOn", "effects": {"OnOff": 3.0}}]
        }"#;
        assert_eq!(load_manifest(doc).unwrap_err().field, "actions[0].effects.OnOff");
        let doc = doc.replace("3.0", "true");
        let m = load_manifest(&doc).unwrap();
        assert_eq!(m.actions[0].effects["OnOff"], Effect::Set(Value::Bool(true)));
    }

    #[test]
    fn round_trips_through_json() {
        let m = load_manifest(THERMO).unwrap();
        assert_eq!(load_manifest(&m.to_json()).unwrap(), m);
    }
}
