use super::*;
use crate::cql::Predicate;
use crate::value::Value;

fn thermo(id: &str, location: &str, extra: &str) -> DeviceManifest {
    load_manifest(&format!(
        r#"{{"deviceId": "{id}", "devtype": "Thermometer", "attributes": {{"location": "{location}"}},
            "properties": [{{"name": "Temperature", "datatype": "Double", "units": "C"}}],
            "simulation": {{"Temperature": {{"kind": "linear", "start": 20, "slopePerHour": 1}}}} {extra}}}"#
    ))
    .unwrap()
}

fn metered(id: &str, capacity: f64, remaining: f64) -> (DeviceManifest, f64) {
    let m = thermo(
        id,
        "room1",
        &format!(r#", "energyClass": "Metered", "batteryCapacity": {capacity}, "energyProfile": {{"Sense": 1}}"#),
    );
    (m, capacity - remaining)
}

fn pred(a: &str, v: &str) -> Predicate {
    Predicate {
        attribute: a.into(),
        value: v.into(),
    }
}

#[test]
fn duplicate_device_id_rejected() {
    let r = DeviceRegistry::new();
    r.register_virtual(thermo("t1", "room1", "")).unwrap();
    assert_eq!(
        r.register_virtual(thermo("t1", "room2", "")),
        Err(DeviceError::Registration("t1".into()))
    );
    assert_eq!(r.len(), 1);
}

#[test]
fn devset_filters_by_predicates() {
    let r = DeviceRegistry::new();
    r.register_virtual(thermo("t1", "room1", "")).unwrap();
    r.register_virtual(thermo("t2", "room2", "")).unwrap();
    r.register_virtual(thermo("t3", "room1", "")).unwrap();
    let set = r.resolve_devset("Thermometer", &[pred("location", "room1")]).unwrap();
    assert_eq!(set.members, vec!["t1", "t3"]);
    let all = r.resolve_devset("Thermometer", &[]).unwrap();
    assert_eq!(all.members.len(), 3);
    assert!(set.members.iter().all(|m| all.members.contains(m)));
    assert_eq!(
        r.resolve_devset("Barometer", &[]),
        Err(DeviceError::EmptySet("Barometer".into()))
    );
    assert!(r.resolve_devset("Thermometer", &[pred("location", "attic")]).is_err());
}

fn drain(r: &DeviceRegistry, id: &str, amount: f64) {
    for i in 0..amount as u64 {
        r.sense(id, "Temperature", i).unwrap();
    }
}

#[test]
fn selection_prefers_unmetered_then_fuller_battery() {
    let r = DeviceRegistry::new();
    r.register_virtual(thermo("A", "room1", "")).unwrap();
    for (id, rem) in [("B", 50.0), ("C", 80.0)] {
        let (m, used) = metered(id, 100.0, rem);
        r.register_virtual(m).unwrap();
        drain(&r, id, used);
    }
    let set = r.resolve_devset("Thermometer", &[]).unwrap();
    assert_eq!(r.select_device(&set, 1).devices, vec!["A"]);
    let metered_only = DevSet {
        members: vec!["B".into(), "C".into()],
        ..set.clone()
    };
    assert_eq!(r.select_device(&metered_only, 1).devices, vec!["C"]);
    let all = r.select_device(&set, 5);
    assert_eq!(all.devices, vec!["A", "C", "B"]);
    assert!(all.short);
    assert!(!r.select_device(&set, 3).short);
}

#[test]
fn comparator_is_a_total_order() {
    let mut keys = Vec::new();
    for class in [EnergyClass::NonEnergyAware, EnergyClass::Metered, EnergyClass::Sleepy] {
        for fraction in [0.0, 0.5, 1.0] {
            for asleep in [false, true] {
                for id in ["a", "b"] {
                    keys.push(PriorityKey {
                        device_id: id.into(),
                        class,
                        fraction,
                        asleep,
                    });
                }
            }
        }
    }
    use std::cmp::Ordering::*;
    for a in &keys {
        assert_eq!(priority_cmp(a, a), Equal);
        for b in &keys {
            assert_eq!(priority_cmp(a, b), priority_cmp(b, a).reverse());
            for c in &keys {
                if priority_cmp(a, b) != Greater && priority_cmp(b, c) != Greater {
                    assert_ne!(priority_cmp(a, c), Greater);
                }
            }
            // class dominates everything else
            if a.class < b.class {
                assert_eq!(priority_cmp(a, b), Less);
            }
            if a.class == b.class && a.class == EnergyClass::Sleepy && !a.asleep && b.asleep {
                assert_eq!(priority_cmp(a, b), Less);
            }
            if a.class == b.class && a.class == EnergyClass::Metered && a.fraction > b.fraction {
                assert_eq!(priority_cmp(a, b), Less);
            }
        }
    }
}

#[test]
fn metered_device_stops_at_depletion() {
    let r = DeviceRegistry::new();
    let m = thermo(
        "m1",
        "room1",
        r#", "energyClass": "Metered", "batteryCapacity": 10, "energyProfile": {"Sense": 2}"#,
    );
    r.register_virtual(m).unwrap();
    let set = r.resolve_devset("Thermometer", &[]).unwrap();
    for i in 0..5 {
        assert_eq!(r.select_device(&set, 1).devices, vec!["m1"]);
        r.sense("m1", "Temperature", i).unwrap();
    }
    assert_eq!(r.energy("m1").unwrap().remaining, 0.0);
    assert!(r.select_device(&set, 1).devices.is_empty());
    assert_eq!(
        r.sense("m1", "Temperature", 10),
        Err(DeviceError::EnergyExhausted("m1".into()))
    );
    r.recharge("m1", None).unwrap();
    assert!(r.sense("m1", "Temperature", 11).is_ok());
}

#[test]
fn sleepy_state_survives_sleep() {
    let r = DeviceRegistry::new();
    let doc = r#"{"deviceId": "soil-1", "devtype": "SoilSensor", "energyClass": "Sleepy",
        "idleTimeoutMs": 1000, "wakeLatencyMs": 250,
        "properties": [{"name": "Moisture", "datatype": "Double", "writable": true, "initial": 0.3}],
        "actions": [{"name": "Calibrate", "params": ["level"], "effects": {"Moisture": {"param": "level"}}}]}"#;
    r.register_virtual(load_manifest(doc).unwrap()).unwrap();
    r.actuate("soil-1", "Calibrate", &[("level".into(), "0.42".into())], 0).unwrap();
    let before = r.sense("soil-1", "Moisture", 100).unwrap();
    assert_eq!(before.value, Some(Value::Double(0.42)));
    assert_eq!(r.manage_sleep("soil-1", 5000, false).unwrap(), SleepOutcome::Slept);
    assert!(r.energy("soil-1").unwrap().asleep);
    let after = r.sense("soil-1", "Moisture", 6000).unwrap();
    assert!(after.woke);
    assert_eq!(after.latency_ms, 250);
    assert_eq!(after.value, before.value);
    assert_eq!(r.manage_sleep("soil-1", 6100, false).unwrap(), SleepOutcome::Unchanged);
}

#[test]
fn actuate_validates_params() {
    let r = DeviceRegistry::new();
    let doc = r#"{"deviceId": "l1", "devtype": "Light",
        "properties": [{"name": "Brightness", "datatype": "Double"}],
        "actions": [{"name": "Dim", "params": ["level"], "effects": {"Brightness": {"param": "level"}}}]}"#;
    r.register_virtual(load_manifest(doc).unwrap()).unwrap();
    assert!(matches!(
        r.actuate("l1", "Dim", &[("lvl".into(), "3".into())], 0),
        Err(DeviceError::BadParams(_))
    ));
    assert!(matches!(r.actuate("l1", "Explode", &[], 0), Err(DeviceError::UnknownAction(_))));
    r.actuate("l1", "Dim", &[("level".into(), "3".into())], 0).unwrap();
    assert_eq!(r.sense("l1", "Brightness", 1).unwrap().value, Some(Value::Double(3.0)));
}

#[test]
fn offline_device_fails_and_is_skipped() {
    let r = DeviceRegistry::new();
    r.register_virtual(thermo("t1", "room1", "")).unwrap();
    r.register_virtual(thermo("t2", "room1", "")).unwrap();
    r.set_online("t1", false).unwrap();
    assert_eq!(r.sense("t1", "Temperature", 0), Err(DeviceError::Offline("t1".into())));
    let set = r.resolve_devset("Thermometer", &[]).unwrap();
    assert_eq!(r.select_device(&set, 1).devices, vec!["t2"]);
}
