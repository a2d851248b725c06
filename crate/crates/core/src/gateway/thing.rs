use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::device::DeviceManifest;
use crate::value::{DataType, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThingProperty {
    #[serde(rename = "type")]
    pub ty: String,
    pub value: Value,
    #[serde(default)]
    pub writable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ThingAction {
    #[serde(default)]
    pub params: Vec<String>,
}

/// One entry of a gateway's device ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThingDescription {
    pub id: String,
    pub title: String,
    #[serde(rename = "@type")]
    pub devtype: String,
    #[serde(default)]
    pub properties: BTreeMap<String, ThingProperty>,
    #[serde(default)]
    pub actions: BTreeMap<String, ThingAction>,
}

impl ThingDescription {
    pub fn property_type(&self, name: &str) -> Option<DataType> {
        self.properties.get(name).and_then(|p| DataType::from_thing_type(&p.ty))
    }

    pub fn title_of(manifest: &DeviceManifest) -> String {
        manifest
            .attributes
            .get("title")
            .cloned()
            .unwrap_or_else(|| manifest.devtype.clone())
    }
}

/// Decodes a JSON property value against its declared type.
pub fn value_from_json(json: &serde_json::Value, ty: DataType) -> Option<Value> {
    let v: Value = serde_json::from_value(json.clone()).ok()?;
    (v.data_type() == ty).then_some(v)
}

/// Action inputs travel as JSON; the runtime passes them on as text.
pub fn param_text(json: &serde_json::Value) -> String {
    match json {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
