use std::fmt::Write;

use super::ast::*;
use super::lexer::{is_ident_continue, is_ident_start};
use super::parser::is_keyword;
use crate::privacy::{ClientSelector, PolicyRule, PropertySelector};

/// Renders the canonical text of a statement. Durations are always emitted
/// in milliseconds and default modifiers are omitted.
pub fn render_query(query: &Query) -> String {
    let mut out = String::new();
    match query {
        Query::Find(f) => render_find(&mut out, f),
        Query::Sense(s) => render_sense(&mut out, s),
        Query::Actuate(a) => render_actuate(&mut out, a),
        Query::Event(e) => render_event(&mut out, e),
        Query::Denature(d) => render_denature(&mut out, d),
        Query::GatewayImport(g) => {
            write!(out, "IMPORT GATEWAY {}", quote(&g.url)).unwrap();
            if let Some(t) = &g.token {
                write!(out, " TOKEN {}", quote(t)).unwrap();
            }
        }
    }
    out
}

fn is_plain_word(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(is_ident_start) && chars.all(is_ident_continue)
}

fn is_plain_number(s: &str) -> bool {
    let body = s.strip_prefix('-').unwrap_or(s);
    let mut parts = body.splitn(2, '.');
    let int = parts.next().unwrap_or("");
    let frac = parts.next();
    !int.is_empty()
        && int.chars().all(|c| c.is_ascii_digit())
        && frac.is_none_or(|f| !f.is_empty() && f.chars().all(|c| c.is_ascii_digit()))
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

fn value(s: &str) -> String {
    if is_plain_word(s) || is_plain_number(s) {
        s.to_string()
    } else {
        quote(s)
    }
}

fn params(out: &mut String, params: &[(String, String)]) {
    let joined: Vec<String> = params.iter().map(|(k, v)| format!("{k}={}", value(v))).collect();
    write!(out, " PARAMS {}", joined.join(",")).unwrap();
}

fn duration(out: &mut String, kw: &str, ms: Option<u64>) {
    if let Some(ms) = ms {
        write!(out, " {kw} {ms} MS").unwrap();
    }
}

fn cardinality(out: &mut String, c: u32) {
    if c != 1 {
        write!(out, " CARDINALITY {c}").unwrap();
    }
}

fn render_find(out: &mut String, f: &FindSpec) {
    write!(out, "FIND {}", f.devtype).unwrap();
    if !f.predicates.is_empty() {
        let preds: Vec<String> = f
            .predicates
            .iter()
            .map(|p| format!("{}={}", p.attribute, value(&p.value)))
            .collect();
        write!(out, " WHERE {}", preds.join(" AND ")).unwrap();
    }
    write!(out, " AS {}", f.alias).unwrap();
}

fn render_sense(out: &mut String, s: &SenseSpec) {
    write!(out, "SENSE {} FROM {}", s.property, s.target).unwrap();
    duration(out, "DELTA", s.delta);
    if let Some(e) = s.error {
        write!(out, " ERROR {e}").unwrap();
    }
    duration(out, "PERIOD", s.period);
    duration(out, "DEADLINE", s.deadline);
    cardinality(out, s.cardinality);
}

fn render_actuate(out: &mut String, a: &ActuateSpec) {
    write!(out, "ACTUATE {} ON {}", a.action, a.target).unwrap();
    if !a.params.is_empty() {
        params(out, &a.params);
    }
    duration(out, "PERIOD", a.period);
    duration(out, "DEADLINE", a.deadline);
    cardinality(out, a.cardinality);
}

fn render_event(out: &mut String, e: &EventSpec) {
    write!(out, "EVENT {} ", e.name).unwrap();
    match &e.trigger {
        Trigger::Condition {
            property,
            comparator,
            threshold,
            target,
        } => write!(out, "WHEN {property} {} {threshold} FROM {target}", comparator.symbol()).unwrap(),
        Trigger::Periodic { period } => write!(out, "EVERY {period} MS").unwrap(),
    }
    out.push_str(" DO ");
    render_actuate(out, &e.body);
}

fn render_rule(out: &mut String, r: &PolicyRule) {
    out.push_str(r.kind.keyword());
    if let PropertySelector::Named(p) = &r.property {
        write!(out, " PROPERTY {p}").unwrap();
    }
    match &r.clients {
        ClientSelector::All => {}
        ClientSelector::Allow(c) => write!(out, " ALLOW {}", c.join(",")).unwrap(),
        ClientSelector::Block(c) => write!(out, " BLOCK {}", c.join(",")).unwrap(),
    }
    if !r.params.is_empty() {
        params(out, &r.params);
    }
}

fn render_denature(out: &mut String, d: &DenatureSpec) {
    write!(out, "DENATURE SENSOR {} ", d.sensor_id).unwrap();
    for (i, rule) in d.rules.iter().enumerate() {
        if i > 0 {
            out.push_str("; ");
        }
        render_rule(out, rule);
    }
}

/// True when `s` can appear as an identifier in CQL text.
pub fn is_identifier(s: &str) -> bool {
    is_plain_word(s) && !is_keyword(s)
}
