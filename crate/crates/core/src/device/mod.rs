//! Device manifests, registry, drivers and energy accounting.

mod driver;
mod energy;
mod manifest;
mod registry;
pub mod sim;

pub use driver::{default_value, DeviceDriver, DriverKind, VirtualDriver};
pub use energy::{DynamicModel, EnergyEvent, EnergyState, Operation, ProfileKind, SleepOutcome};
pub use manifest::{
    load_manifest, load_manifest_dir, load_manifest_file, ActionSpec, DeviceManifest, Effect, EnergyClass,
    ManifestError, PropertySpec, DEFAULT_IDLE_TIMEOUT_MS, DEFAULT_WAKE_LATENCY_MS,
};
pub use registry::{priority_cmp, DevSet, DeviceRegistry, PriorityKey, Reading, Selection};
pub use sim::Signal;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeviceError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("device {0} already registered")]
    Registration(String),
    #[error("no device of type {0} matches")]
    EmptySet(String),
    #[error("unknown device {0}")]
    UnknownDevice(String),
    #[error("unknown property {0}")]
    UnknownProperty(String),
    #[error("unknown action {0}")]
    UnknownAction(String),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("property {0} is read-only")]
    ReadOnly(String),
    #[error("device {0} energy exhausted")]
    EnergyExhausted(String),
    #[error("device {0} is not metered")]
    NotMetered(String),
    #[error("device {0} offline")]
    Offline(String),
    #[error("gateway: {0}")]
    Gateway(String),
}

#[cfg(test)]
mod tests;
