//! Device registry, device sets and device selection.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::driver::{DeviceDriver, DriverKind, VirtualDriver};
use super::energy::{EnergyState, Operation, SleepOutcome};
use super::manifest::{DeviceManifest, EnergyClass};
use super::DeviceError;
use crate::cql::Predicate;
use crate::value::Value;
use crate::Millis;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DevSet {
    pub name: String,
    pub devtype: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Selection {
    pub devices: Vec<String>,
    /// Fewer devices than requested were available.
    pub short: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reading {
    pub value: Option<Value>,
    pub latency_ms: Millis,
    pub woke: bool,
}

struct Slot {
    manifest: DeviceManifest,
    inner: Mutex<SlotInner>,
}

struct SlotInner {
    driver: Box<dyn DeviceDriver>,
    energy: EnergyState,
    online: bool,
}

/// Priority key: NonEnergyAware, then Metered by remaining charge
/// descending, then Sleepy awake before asleep, then deviceId.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorityKey {
    pub device_id: String,
    pub class: EnergyClass,
    pub fraction: f64,
    pub asleep: bool,
}

pub fn priority_cmp(a: &PriorityKey, b: &PriorityKey) -> std::cmp::Ordering {
    a.class
        .cmp(&b.class)
        .then_with(|| match a.class {
            EnergyClass::Metered => b.fraction.total_cmp(&a.fraction),
            EnergyClass::Sleepy => a.asleep.cmp(&b.asleep),
            EnergyClass::NonEnergyAware => std::cmp::Ordering::Equal,
        })
        .then_with(|| a.device_id.cmp(&b.device_id))
}

/// Thread-safe device table. Reads run concurrently; operations on one
/// device are serialized by that device's lock.
#[derive(Default, Clone)]
pub struct DeviceRegistry {
    slots: Arc<RwLock<BTreeMap<String, Arc<Slot>>>>,
}

impl DeviceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, DeviceError> {
        self.slots
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| DeviceError::UnknownDevice(id.to_string()))
    }

    fn make_slot(manifest: DeviceManifest, driver: Box<dyn DeviceDriver>) -> Arc<Slot> {
        let energy = EnergyState::from_manifest(&manifest);
        Arc::new(Slot {
            manifest,
            inner: Mutex::new(SlotInner {
                driver,
                energy,
                online: true,
            }),
        })
    }

    pub fn register(&self, manifest: DeviceManifest, driver: Box<dyn DeviceDriver>) -> Result<(), DeviceError> {
        manifest.validate()?;
        let mut slots = self.slots.write().unwrap();
        if slots.contains_key(&manifest.device_id) {
            return Err(DeviceError::Registration(manifest.device_id.clone()));
        }
        slots.insert(manifest.device_id.clone(), Self::make_slot(manifest, driver));
        Ok(())
    }

    pub fn register_virtual(&self, manifest: DeviceManifest) -> Result<(), DeviceError> {
        let driver = Box::new(VirtualDriver::new(&manifest));
        self.register(manifest, driver)
    }

    /// Inserts or replaces; returns true when a device was replaced.
    pub fn upsert(&self, manifest: DeviceManifest, driver: Box<dyn DeviceDriver>) -> Result<bool, DeviceError> {
        manifest.validate()?;
        let id = manifest.device_id.clone();
        Ok(self
            .slots
            .write()
            .unwrap()
            .insert(id, Self::make_slot(manifest, driver))
            .is_some())
    }

    pub fn unregister(&self, id: &str) -> Option<DeviceManifest> {
        self.slots.write().unwrap().remove(id).map(|s| s.manifest.clone())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.slots.read().unwrap().contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.slots.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> Vec<String> {
        self.slots.read().unwrap().keys().cloned().collect()
    }

    pub fn manifest(&self, id: &str) -> Option<DeviceManifest> {
        self.slots.read().unwrap().get(id).map(|s| s.manifest.clone())
    }

    pub fn manifests(&self) -> Vec<DeviceManifest> {
        self.slots.read().unwrap().values().map(|s| s.manifest.clone()).collect()
    }

    pub fn driver_kind(&self, id: &str) -> Option<DriverKind> {
        let slot = self.slot(id).ok()?;
        let kind = slot.inner.lock().unwrap().driver.kind();
        Some(kind)
    }

    /// FIND semantics: devtype plus attribute equality, with `deviceId` and
    /// `owner` matched against the manifest fields.
    pub fn matches(m: &DeviceManifest, devtype: &str, predicates: &[Predicate]) -> bool {
        m.devtype == devtype
            && predicates.iter().all(|p| match p.attribute.as_str() {
                "deviceId" => m.device_id == p.value,
                "owner" if !m.attributes.contains_key("owner") => m.owner.as_deref() == Some(&p.value),
                attr => m.attributes.get(attr) == Some(&p.value),
            })
    }

    pub fn resolve_devset(&self, devtype: &str, predicates: &[Predicate]) -> Result<DevSet, DeviceError> {
        let members: Vec<String> = self
            .slots
            .read()
            .unwrap()
            .values()
            .filter(|s| Self::matches(&s.manifest, devtype, predicates))
            .map(|s| s.manifest.device_id.clone())
            .collect();
        if members.is_empty() {
            return Err(DeviceError::EmptySet(devtype.to_string()));
        }
        Ok(DevSet {
            name: devtype.to_string(),
            devtype: devtype.to_string(),
            members,
        })
    }

    pub fn priority_key(&self, id: &str) -> Option<PriorityKey> {
        let slot = self.slot(id).ok()?;
        let inner = slot.inner.lock().unwrap();
        Some(PriorityKey {
            device_id: id.to_string(),
            class: inner.energy.class,
            fraction: inner.energy.fraction(),
            asleep: inner.energy.asleep,
        })
    }

    fn usable(&self, id: &str) -> bool {
        self.slot(id).is_ok_and(|s| {
            let inner = s.inner.lock().unwrap();
            inner.online && inner.energy.available()
        })
    }

    /// First `k` usable members under the priority order.
    pub fn select_device(&self, set: &DevSet, k: usize) -> Selection {
        let mut keys: Vec<PriorityKey> = set
            .members
            .iter()
            .filter(|id| self.usable(id))
            .filter_map(|id| self.priority_key(id))
            .collect();
        keys.sort_by(priority_cmp);
        let devices: Vec<String> = keys.into_iter().take(k).map(|k| k.device_id).collect();
        Selection {
            short: devices.len() < k,
            devices,
        }
    }

    fn prepare(inner: &mut SlotInner, id: &str, op: Operation<'_>, now: Millis) -> Result<Millis, DeviceError> {
        if !inner.online {
            return Err(DeviceError::Offline(id.to_string()));
        }
        inner.energy.check(id, op, now)?;
        let mut extra = 0;
        if inner.energy.asleep && inner.energy.manage_sleep(now, true) == SleepOutcome::Woken {
            extra = inner.energy.wake_latency;
        }
        Ok(extra)
    }

    pub fn sense(&self, id: &str, property: &str, now: Millis) -> Result<Reading, DeviceError> {
        let slot = self.slot(id)?;
        if slot.manifest.property(property).is_none() {
            return Err(DeviceError::UnknownProperty(format!("{id}.{property}")));
        }
        let mut inner = slot.inner.lock().unwrap();
        let wake = Self::prepare(&mut inner, id, Operation::Sense, now)?;
        let value = inner.driver.sense(property, now + wake)?;
        inner.energy.record(id, Operation::Sense, None, now)?;
        let latency = inner.driver.measured_latency().unwrap_or(slot.manifest.latency_ms) + wake;
        Ok(Reading {
            value: Some(value),
            latency_ms: latency,
            woke: wake > 0,
        })
    }

    pub fn actuate(
        &self,
        id: &str,
        action: &str,
        params: &[(String, String)],
        now: Millis,
    ) -> Result<Reading, DeviceError> {
        let slot = self.slot(id)?;
        let spec = slot
            .manifest
            .action(action)
            .ok_or_else(|| DeviceError::UnknownAction(format!("{id}.{action}")))?;
        if let Some((k, _)) = params.iter().find(|(k, _)| !spec.params.contains(k)) {
            return Err(DeviceError::BadParams(format!("{action} has no parameter {k}")));
        }
        let mut inner = slot.inner.lock().unwrap();
        let op = Operation::Actuate(action);
        let wake = Self::prepare(&mut inner, id, op, now)?;
        inner.driver.actuate(action, params, now + wake)?;
        inner.energy.record(id, op, None, now)?;
        let latency = inner.driver.measured_latency().unwrap_or(slot.manifest.latency_ms) + wake;
        Ok(Reading {
            value: None,
            latency_ms: latency,
            woke: wake > 0,
        })
    }

    pub fn write_property(&self, id: &str, property: &str, value: Value) -> Result<(), DeviceError> {
        let slot = self.slot(id)?;
        let mut inner = slot.inner.lock().unwrap();
        inner.driver.write_property(property, value)
    }

    pub fn record_energy_event(
        &self,
        id: &str,
        op: Operation<'_>,
        observed: Option<f64>,
        now: Millis,
    ) -> Result<EnergyState, DeviceError> {
        let slot = self.slot(id)?;
        let mut inner = slot.inner.lock().unwrap();
        if !inner.energy.is_metered() {
            return Err(DeviceError::NotMetered(id.to_string()));
        }
        inner.energy.record(id, op, observed, now)?;
        Ok(inner.energy.clone())
    }

    pub fn recharge(&self, id: &str, amount: Option<f64>) -> Result<(), DeviceError> {
        self.slot(id)?.inner.lock().unwrap().energy.recharge(amount);
        Ok(())
    }

    pub fn energy(&self, id: &str) -> Option<EnergyState> {
        let slot = self.slot(id).ok()?;
        let e = slot.inner.lock().unwrap().energy.clone();
        Some(e)
    }

    pub fn manage_sleep(&self, id: &str, now: Millis, pending: bool) -> Result<SleepOutcome, DeviceError> {
        let slot = self.slot(id)?;
        let outcome = slot.inner.lock().unwrap().energy.manage_sleep(now, pending);
        Ok(outcome)
    }

    /// Sleep pass over every idle Sleepy device.
    pub fn sleep_tick(&self, now: Millis) -> Vec<String> {
        let slots: Vec<_> = self.slots.read().unwrap().values().cloned().collect();
        slots
            .into_iter()
            .filter(|s| s.manifest.energy_class == EnergyClass::Sleepy)
            .filter(|s| s.inner.lock().unwrap().energy.manage_sleep(now, false) == SleepOutcome::Slept)
            .map(|s| s.manifest.device_id.clone())
            .collect()
    }

    /// Fault injection: an offline device fails every operation.
    pub fn set_online(&self, id: &str, online: bool) -> Result<(), DeviceError> {
        self.slot(id)?.inner.lock().unwrap().online = online;
        Ok(())
    }
}
