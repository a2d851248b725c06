//! Battery accounting for Metered devices and duty-cycle state for Sleepy ones.

use std::collections::BTreeMap;

use serde::Serialize;

use super::manifest::{DeviceManifest, EnergyClass};
use super::DeviceError;
use crate::numeric::least_squares;
use crate::Millis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProfileKind {
    Static,
    Dynamic,
}

/// Operation as seen by the energy model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operation<'a> {
    Sense,
    Actuate(&'a str),
}

impl Operation<'_> {
    /// Indicator name used by the dynamic model.
    pub fn name(&self) -> &str {
        match self {
            Operation::Sense => "Sense",
            Operation::Actuate(a) => a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyEvent {
    pub op: String,
    pub elapsed_s: f64,
    pub observed: f64,
}

/// Least-squares cost model: one coefficient per operation indicator plus
/// one for seconds elapsed since the previous event.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicModel {
    pub ops: Vec<String>,
    pub op_coeffs: Vec<f64>,
    pub elapsed_coeff: f64,
}

impl DynamicModel {
    pub fn fit(history: &[EnergyEvent]) -> Option<Self> {
        if history.is_empty() {
            return None;
        }
        let mut ops: Vec<String> = history.iter().map(|e| e.op.clone()).collect();
        ops.sort();
        ops.dedup();
        let cols = ops.len() + 1;
        let mut design = Vec::with_capacity(history.len() * cols);
        let mut rhs = Vec::with_capacity(history.len());
        for e in history {
            for op in &ops {
                design.push(if *op == e.op { 1.0 } else { 0.0 });
            }
            design.push(e.elapsed_s);
            rhs.push(e.observed);
        }
        let coeffs = least_squares(history.len(), cols, &design, &rhs)?;
        Some(Self {
            op_coeffs: coeffs[..ops.len()].to_vec(),
            elapsed_coeff: coeffs[ops.len()],
            ops,
        })
    }

    pub fn estimate(&self, op: &str, elapsed_s: f64) -> Option<f64> {
        let i = self.ops.iter().position(|o| o == op)?;
        Some(self.op_coeffs[i] + self.elapsed_coeff * elapsed_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyState {
    pub class: EnergyClass,
    pub capacity: f64,
    pub remaining: f64,
    pub profile_kind: ProfileKind,
    pub static_costs: BTreeMap<String, f64>,
    pub history: Vec<EnergyEvent>,
    pub dynamic: Option<DynamicModel>,
    pub exhausted: bool,
    pub asleep: bool,
    pub last_used: Option<Millis>,
    pub idle_timeout: Millis,
    pub wake_latency: Millis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SleepOutcome {
    Slept,
    Woken,
    Unchanged,
}

impl EnergyState {
    pub fn from_manifest(m: &DeviceManifest) -> Self {
        let capacity = m.battery_capacity.unwrap_or(0.0);
        Self {
            class: m.energy_class,
            capacity,
            remaining: capacity,
            profile_kind: if m.energy_profile.is_some() {
                ProfileKind::Static
            } else {
                ProfileKind::Dynamic
            },
            static_costs: m.energy_profile.clone().unwrap_or_default(),
            history: Vec::new(),
            dynamic: None,
            exhausted: false,
            asleep: false,
            last_used: None,
            idle_timeout: m.idle_timeout(),
            wake_latency: m.wake_latency(),
        }
    }

    pub fn is_metered(&self) -> bool {
        self.class == EnergyClass::Metered
    }

    pub fn available(&self) -> bool {
        !(self.is_metered() && self.exhausted)
    }

    /// Remaining charge as a fraction of capacity (1.0 for unmetered devices).
    pub fn fraction(&self) -> f64 {
        if self.is_metered() && self.capacity > 0.0 {
            self.remaining / self.capacity
        } else {
            1.0
        }
    }

    fn elapsed_s(&self, now: Millis) -> f64 {
        self.last_used.map_or(0.0, |t| now.saturating_sub(t) as f64 / 1000.0)
    }

    fn static_cost(&self, op: Operation<'_>) -> f64 {
        let keys: &[&str] = match op {
            Operation::Sense => &["Sense"],
            Operation::Actuate(a) => &[a, "Actuate"],
        };
        keys.iter()
            .find_map(|k| self.static_costs.get(*k))
            .copied()
            .unwrap_or(0.0)
    }

    /// Cost the next `op` at `now` is expected to draw.
    pub fn estimate(&self, op: Operation<'_>, now: Millis) -> f64 {
        match self.profile_kind {
            ProfileKind::Static => self.static_cost(op),
            ProfileKind::Dynamic => self
                .dynamic
                .as_ref()
                .and_then(|d| d.estimate(op.name(), self.elapsed_s(now)))
                .unwrap_or_else(|| self.static_cost(op))
                .max(0.0),
        }
    }

    /// Refuses an operation the battery cannot pay for.
    pub fn check(&mut self, device_id: &str, op: Operation<'_>, now: Millis) -> Result<(), DeviceError> {
        if !self.is_metered() {
            return Ok(());
        }
        let cost = self.estimate(op, now);
        if self.exhausted || cost > self.remaining {
            self.exhausted = true;
            return Err(DeviceError::EnergyExhausted(device_id.to_string()));
        }
        Ok(())
    }

    /// Charges an operation. With an observed depletion the dynamic model is
    /// refitted over the full event history.
    pub fn record(
        &mut self,
        device_id: &str,
        op: Operation<'_>,
        observed: Option<f64>,
        now: Millis,
    ) -> Result<f64, DeviceError> {
        if !self.is_metered() {
            self.last_used = Some(now);
            return Ok(0.0);
        }
        let elapsed = self.elapsed_s(now);
        let cost = match (self.profile_kind, observed) {
            (ProfileKind::Dynamic, Some(obs)) => obs,
            _ => self.estimate(op, now),
        };
        if self.exhausted || cost > self.remaining {
            self.exhausted = true;
            return Err(DeviceError::EnergyExhausted(device_id.to_string()));
        }
        self.remaining -= cost;
        if self.remaining <= 0.0 {
            self.remaining = 0.0;
            self.exhausted = true;
        }
        if let Some(obs) = observed {
            self.history.push(EnergyEvent {
                op: op.name().to_string(),
                elapsed_s: elapsed,
                observed: obs,
            });
            self.dynamic = DynamicModel::fit(&self.history);
        }
        self.last_used = Some(now);
        Ok(cost)
    }

    /// Restores charge (full capacity when `amount` is `None`).
    pub fn recharge(&mut self, amount: Option<f64>) {
        self.remaining = match amount {
            Some(a) => (self.remaining + a.max(0.0)).min(self.capacity),
            None => self.capacity,
        };
        self.exhausted = self.remaining <= 0.0;
    }

    /// Duty-cycle step: wake when work is pending, sleep after idling past
    /// the idle timeout.
    pub fn manage_sleep(&mut self, now: Millis, pending: bool) -> SleepOutcome {
        if self.class != EnergyClass::Sleepy {
            return SleepOutcome::Unchanged;
        }
        if self.asleep {
            if pending {
                self.asleep = false;
                self.last_used = Some(now);
                return SleepOutcome::Woken;
            }
            return SleepOutcome::Unchanged;
        }
        let idle = now.saturating_sub(self.last_used.unwrap_or(0));
        if !pending && idle > self.idle_timeout {
            self.asleep = true;
            return SleepOutcome::Slept;
        }
        SleepOutcome::Unchanged
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::load_manifest;

    fn metered(profile: &str, capacity: f64) -> EnergyState {
        let doc = format!(
            r#"{{"deviceId": "m1", "devtype": "Thermometer", "energyClass": "Metered",
                "batteryCapacity": {capacity} {profile},
                "properties": [{{"name": "Temperature", "datatype": "Double"}}]}}"#
        );
        EnergyState::from_manifest(&load_manifest(&doc).unwrap())
    }

    #[test]
    fn static_sense_costs_two() {
        let mut e = metered(r#", "energyProfile": {"Sense": 2}"#, 10.0);
        assert_eq!(e.record("m1", Operation::Sense, None, 0).unwrap(), 2.0);
        assert_eq!(e.remaining, 8.0);
    }

    #[test]
    fn exhaustion_when_cost_exceeds_remaining() {
        let mut e = metered(r#", "energyProfile": {"Sense": 2}"#, 1.0);
        assert!(matches!(e.check("m1", Operation::Sense, 0), Err(DeviceError::EnergyExhausted(_))));
        assert!(!e.available());
        assert_eq!(e.remaining, 1.0);
        e.recharge(None);
        assert!(e.available());
        e.record("m1", Operation::Sense, None, 1).unwrap_err();
        assert_eq!(e.remaining, 1.0);
    }

    #[test]
    fn unavailable_exactly_at_depletion() {
        let mut e = metered(r#", "energyProfile": {"Sense": 2}"#, 10.0);
        for i in 0..5 {
            assert!(e.available());
            e.check("m1", Operation::Sense, i).unwrap();
            e.record("m1", Operation::Sense, None, i).unwrap();
        }
        assert_eq!(e.remaining, 0.0);
        assert!(!e.available());
    }

    #[test]
    fn dynamic_recovers_constant_cost() {
        let mut e = metered("", 1000.0);
        assert_eq!(e.profile_kind, ProfileKind::Dynamic);
        let mut t = 0;
        for i in 0..8u64 {
            t += 1000 + i * 370;
            e.record("m1", Operation::Sense, Some(3.0), t).unwrap();
            if i % 3 == 0 {
                t += 500;
                e.record("m1", Operation::Actuate("Blink"), Some(1.25), t).unwrap();
            }
        }
        let est = e.estimate(Operation::Sense, t + 4321);
        assert!((est - 3.0).abs() < 1e-9, "{est}");
        let est = e.estimate(Operation::Actuate("Blink"), t + 10);
        assert!((est - 1.25).abs() < 1e-9, "{est}");
    }

    #[test]
    fn sleep_cycle() {
        let doc = r#"{"deviceId": "s1", "devtype": "SoilSensor", "energyClass": "Sleepy",
            "properties": [{"name": "Moisture", "datatype": "Double"}]}"#;
        let mut e = EnergyState::from_manifest(&load_manifest(doc).unwrap());
        e.last_used = Some(1000);
        assert_eq!(e.manage_sleep(1000 + 5_000, false), SleepOutcome::Unchanged);
        assert_eq!(e.manage_sleep(1000 + 60_000, false), SleepOutcome::Slept);
        assert!(e.asleep);
        assert_eq!(e.manage_sleep(1000 + 61_000, false), SleepOutcome::Unchanged);
        assert_eq!(e.manage_sleep(1000 + 62_000, true), SleepOutcome::Woken);
        assert!(!e.asleep);
    }
}
