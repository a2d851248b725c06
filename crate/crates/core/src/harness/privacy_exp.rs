//! Per-rule mediation latency. Wall-clock timings, so never byte-stable.

use std::fmt::Write as _;
use std::time::Instant;

use super::percentile;
use crate::privacy::{Envelope, Mediator, PolicyRule, PrivateKey, RuleKind};
use crate::value::Value;

pub const OVERHEAD_HEADER: &str = "rule,samples,p50_us,p95_us,p99_us,max_us";

#[derive(Debug, Clone, PartialEq)]
pub struct OverheadRow {
    pub rule: String,
    pub samples: usize,
    pub p50_us: f64,
    pub p95_us: f64,
    pub p99_us: f64,
    pub max_us: f64,
}

fn rule(kind: RuleKind, params: &[(&str, &str)]) -> PolicyRule {
    let mut r = PolicyRule::new(kind);
    r.params = params.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    r
}

fn row(name: &str, mut us: Vec<f64>) -> OverheadRow {
    us.sort_by(f64::total_cmp);
    OverheadRow {
        rule: name.to_string(),
        samples: us.len(),
        p50_us: percentile(&us, 50.0),
        p95_us: percentile(&us, 95.0),
        p99_us: percentile(&us, 99.0),
        max_us: us.last().copied().unwrap_or(0.0),
    }
}

/// Times `samples` mediated reads per rule, a no-rule baseline, and one
/// envelope seal/open round trip per sample.
pub fn run_privacy_overhead(samples: usize, seed: u64) -> Vec<OverheadRow> {
    let cases: Vec<(&str, Option<PolicyRule>, Value)> = vec![
        ("none", None, Value::Double(21.5)),
        ("delete", Some(rule(RuleKind::Delete, &[])), Value::Double(21.5)),
        (
            "denature-text",
            Some(rule(RuleKind::Denature, &[("text", "redacted")])),
            Value::Text("Alice".into()),
        ),
        (
            "denature-blur",
            Some(rule(RuleKind::Denature, &[("blur", "0.5")])),
            Value::Text("1234 Main Street, Springfield".into()),
        ),
        (
            "summarize-zip",
            Some(rule(RuleKind::Summarize, &[("summarizer", "zip")])),
            Value::Text("1600 Pennsylvania Avenue NW, Washington, DC 20500".into()),
        ),
        (
            "summarize-average",
            Some(rule(RuleKind::Summarize, &[("summarizer", "average")])),
            Value::Double(21.5),
        ),
    ];
    let mut rows = Vec::new();
    for (name, rule, value) in cases {
        let m = Mediator::new(seed);
        m.register_sensor("s", "owner");
        if let Some(r) = rule {
            m.set_policy("s", "owner", vec![r]).expect("benchmark rules are valid");
        }
        let us: Vec<f64> = (0..samples)
            .map(|_| {
                let v = value.clone();
                let start = Instant::now();
                let out = m.apply_policy("s", "client", "p", v);
                let el = start.elapsed();
                std::hint::black_box(out).ok();
                el.as_secs_f64() * 1e6
            })
            .collect();
        rows.push(row(name, us));
    }

    let sender = PrivateKey::generate();
    let recipient = PrivateKey::generate();
    let (spub, rpub) = (sender.public_key(), recipient.public_key());
    let payload = br#"{"status":"ok","value":21.5}"#;
    let us: Vec<f64> = (0..samples)
        .map(|_| {
            let start = Instant::now();
            let env = Envelope::seal(payload, "bench", &sender, &rpub);
            let out = env.open(&recipient, &spub);
            let el = start.elapsed();
            std::hint::black_box(out).ok();
            el.as_secs_f64() * 1e6
        })
        .collect();
    rows.push(row("envelope", us));
    rows
}

pub fn write_overhead_csv(rows: &[OverheadRow]) -> String {
    let mut s = format!("{OVERHEAD_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:.3},{:.3},{:.3},{:.3}",
            r.rule, r.samples, r.p50_us, r.p95_us, r.p99_us, r.max_us
        );
    }
    s
}
