//! The shipped fixtures and documentation examples stay loadable.

use std::io::Cursor;
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use constellation_core::cluster::{parse_bootstrap, read_frame, write_frame, Message, MsgType};
use constellation_core::device::load_manifest_dir;
use constellation_core::{parse_query, render_query};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

#[test]
fn example_manifests_load() {
    let m = load_manifest_dir(&root().join("fixtures/manifests")).unwrap();
    let mut ids: Vec<&str> = m.iter().map(|d| d.device_id.as_str()).collect();
    ids.sort();
    assert_eq!(ids, ["cam-door", "light-kitchen", "soil-1", "tag-7", "thermo-1"]);
    assert!(load_manifest_dir(&root().join("fixtures/things")).unwrap().len() >= 3);
}

#[test]
fn documented_examples_parse() {
    let doc = std::fs::read_to_string(root().join("docs/cql.md")).unwrap();
    let block = doc.split("## Examples").nth(1).unwrap();
    let body = block.split("```").nth(1).unwrap();
    let mut n = 0;
    for line in body.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let q = parse_query(line).unwrap_or_else(|e| panic!("{line}: {e}"));
        assert_eq!(parse_query(&render_query(&q)).unwrap(), q, "{line}");
        n += 1;
    }
    assert_eq!(n, 6);
}

#[test]
fn bootstrap_lines_parse() {
    let nodes = parse_bootstrap("# seeds\nR 127.0.0.1:7000\n\nL1 10.0.0.2:7001\n").unwrap();
    assert_eq!(nodes.len(), 2);
    assert!(parse_bootstrap("R\n").is_err());
}

#[test]
fn frames_cross_a_real_socket() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let echo = std::thread::spawn(move || {
        let (mut s, _) = listener.accept().unwrap();
        while let Some(m) = read_frame(&mut s).unwrap() {
            write_frame(&mut s, &m).unwrap();
        }
    });
    let mut s = std::net::TcpStream::connect(addr).unwrap();
    let sent: Vec<Message> = (0..20)
        .map(|i| Message::new(MsgType::Heartbeat, "L1", serde_json::json!({ "seq": i, "pad": "x".repeat(i * 100) })))
        .collect();
    for m in &sent {
        write_frame(&mut s, m).unwrap();
        assert_eq!(read_frame(&mut s).unwrap().as_ref(), Some(m));
    }
    s.shutdown(std::net::Shutdown::Write).unwrap();
    echo.join().unwrap();
}

#[test]
fn frame_layout_is_length_prefixed_json() {
    let m = Message::new(MsgType::JoinReq, "E1", serde_json::json!({}));
    let mut buf = Vec::new();
    write_frame(&mut buf, &m).unwrap();
    let len = u32::from_be_bytes(buf[..4].try_into().unwrap()) as usize;
    assert_eq!(len, buf.len() - 4);
    let v: serde_json::Value = serde_json::from_slice(&buf[4..]).unwrap();
    for key in ["type", "version", "sender", "payload"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(read_frame(&mut Cursor::new(buf)).unwrap(), Some(m));
}
