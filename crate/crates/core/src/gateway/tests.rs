use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::device::load_manifest;
use crate::runtime::{Outcome, SimClock, Submission};

const LIGHT: &str = include_str!("../../../../fixtures/things/light-strip.json");
const THERMO: &str = include_str!("../../../../fixtures/things/hall-thermometer.json");
const LOCK: &str = include_str!("../../../../fixtures/things/door-lock.json");

fn start(docs: &[&str], token: Option<&str>) -> GatewayServer {
    let manifests = docs.iter().map(|d| load_manifest(d).unwrap()).collect();
    GatewayServer::start(MockGateway::new(manifests, token.map(String::from)), "127.0.0.1:0").unwrap()
}

fn engine() -> Engine {
    Engine::new(Arc::new(SimClock::new(0)))
}

#[test]
fn ledger_lists_light_strip() {
    let gw = start(&[LIGHT], None);
    let things = GatewayClient::new(&gw.url(), None).things().unwrap();
    assert_eq!(things.len(), 1);
    let t = &things[0];
    for p in ["OnOff", "Color", "Brightness"] {
        assert!(t.properties.contains_key(p), "{p}");
    }
    for a in ["TurnOn", "TurnOff", "ChangeColor"] {
        assert!(t.actions.contains_key(a), "{a}");
    }
    assert_eq!(t.properties["OnOff"].value, Value::Bool(false));
}

#[test]
fn empty_and_independent_ledgers() {
    let empty = start(&[], None);
    assert!(GatewayClient::new(&empty.url(), None).things().unwrap().is_empty());
    let a = start(&[LIGHT], None);
    let b = start(&[LIGHT], None);
    GatewayClient::new(&a.url(), None).invoke_action("light-strip-1", "TurnOn", &[]).unwrap();
    let get = |g: &GatewayServer| GatewayClient::new(&g.url(), None).get_property("light-strip-1", "OnOff").unwrap();
    assert_eq!(get(&a), serde_json::json!(true));
    assert_eq!(get(&b), serde_json::json!(false));
}

#[test]
fn read_your_write_and_errors() {
    let gw = start(&[LIGHT, LOCK], None);
    let c = GatewayClient::new(&gw.url(), None);
    c.put_property("light-strip-1", "OnOff", &Value::Bool(true)).unwrap();
    assert_eq!(c.get_property("light-strip-1", "OnOff").unwrap(), serde_json::json!(true));
    assert!(matches!(
        c.put_property("front-door", "Locked", &Value::Bool(false)),
        Err(GatewayError::BadRequest(_))
    ));
    assert!(matches!(
        c.put_property("light-strip-1", "OnOff", &Value::Double(1.0)),
        Err(GatewayError::BadRequest(_))
    ));
    assert!(matches!(c.get_property("nope", "OnOff"), Err(GatewayError::NotFound(_))));
    assert!(matches!(c.get_property("light-strip-1", "Hue"), Err(GatewayError::NotFound(_))));
    assert!(matches!(c.invoke_action("light-strip-1", "Explode", &[]), Err(GatewayError::NotFound(_))));
}

#[test]
fn bearer_token_enforced() {
    let gw = start(&[LIGHT], Some("s3cret"));
    assert_eq!(GatewayClient::new(&gw.url(), None).things(), Err(GatewayError::Unauthorized));
    assert_eq!(GatewayClient::new(&gw.url(), Some("s3cret")).things().unwrap().len(), 1);
}

#[test]
fn import_is_idempotent() {
    let gw = start(&[LIGHT, THERMO, LOCK], None);
    let e = engine();
    let ids = import_gateway(&e, &gw.url(), None).unwrap();
    assert_eq!(ids.len(), 3);
    assert_eq!(e.registry.len(), 3);
    assert!(ids.contains(&format!("{}#light-strip-1", gw.url())));
    import_gateway(&e, &gw.url(), None).unwrap();
    assert_eq!(e.registry.len(), 3);
}

#[test]
fn unreachable_leaves_registry_unchanged() {
    let e = engine();
    e.add_device(load_manifest(THERMO).unwrap()).unwrap();
    // bind then drop to obtain a closed port
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let r = import_gateway(&e, &format!("http://127.0.0.1:{port}"), None);
    assert!(matches!(r, Err(GatewayError::Unreachable(_))));
    assert_eq!(e.registry.ids(), vec!["hall-thermo"]);
}

#[test]
fn cql_import_and_actuate_reaches_gateway() {
    let gw = start(&[LIGHT], None);
    let e = engine();
    let sub = e.submit("app", &format!("IMPORT GATEWAY {}", gw.url())).unwrap();
    assert!(matches!(sub, Submission::Imported { ref devices } if devices.len() == 1));
    let Submission::Result { result } = e.submit("app", "ACTUATE TurnOn ON LightStrip").unwrap() else {
        panic!()
    };
    assert_eq!(result.per_device[0].outcome, Outcome::Ack);
    assert_eq!(result.per_device[0].served_by, Some(crate::runtime::ServedBy::Gateway));
    assert_eq!(gw.gateway.get_property("light-strip-1", "OnOff").unwrap(), Value::Bool(true));
    let Submission::Result { result } = e.submit("app", "SENSE OnOff FROM LightStrip").unwrap() else {
        panic!()
    };
    assert_eq!(result.values(), vec![&Value::Bool(true)]);
}

#[test]
fn mirror_fidelity_over_random_writes() {
    let gw = start(&[LIGHT], None);
    let e = engine();
    import_gateway(&e, &gw.url(), None).unwrap();
    let id = mirror_id(&gw.url(), "light-strip-1");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let before = gw.gateway.request_count();
    for i in 0..100 {
        let (prop, value) = match rng.gen_range(0..3) {
            0 => ("OnOff", Value::Bool(rng.gen())),
            1 => ("Color", Value::Text(format!("c{}", rng.gen_range(0..1000)))),
            _ => ("Brightness", Value::Double(rng.gen_range(0..=100) as f64)),
        };
        if i % 2 == 0 {
            gw.gateway.put_property("light-strip-1", prop, value.clone()).unwrap();
        } else {
            e.registry.write_property(&id, prop, value.clone()).unwrap();
        }
        let mirrored = e.registry.sense(&id, prop, i).unwrap().value.unwrap();
        assert_eq!(mirrored, gw.gateway.get_property("light-strip-1", prop).unwrap());
        assert_eq!(mirrored, value);
    }
    // 50 writes plus 100 reads went over HTTP
    assert_eq!(gw.gateway.request_count() - before, 150);
}
