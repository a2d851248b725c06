//! Per-sensor privacy rules and the mediator that applies them.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::{Arc, Mutex, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PrivacyError;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RuleKind {
    Delete,
    Denature,
    Summarize,
}

impl RuleKind {
    pub fn keyword(self) -> &'static str {
        match self {
            RuleKind::Delete => "DELETE",
            RuleKind::Denature => "DENATURE",
            RuleKind::Summarize => "SUMMARIZE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClientSelector {
    All,
    Allow(Vec<String>),
    Block(Vec<String>),
}

impl ClientSelector {
    /// A whitelist rule targets everybody *not* on the list; a blocklist
    /// rule targets exactly the listed clients.
    pub fn matches(&self, client: &str) -> bool {
        match self {
            ClientSelector::All => true,
            ClientSelector::Allow(list) => !list.iter().any(|c| c == client),
            ClientSelector::Block(list) => list.iter().any(|c| c == client),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PropertySelector {
    All,
    Named(String),
}

impl PropertySelector {
    pub fn matches(&self, property: &str) -> bool {
        match self {
            PropertySelector::All => true,
            PropertySelector::Named(p) => p == property,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyRule {
    pub kind: RuleKind,
    pub clients: ClientSelector,
    pub property: PropertySelector,
    pub params: Vec<(String, String)>,
}

impl PolicyRule {
    pub fn new(kind: RuleKind) -> Self {
        Self {
            kind,
            clients: ClientSelector::All,
            property: PropertySelector::All,
            params: Vec::new(),
        }
    }

    pub fn param(&self, key: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(key))
            .map(|(_, v)| v.as_str())
    }

    fn applies(&self, client: &str, property: &str) -> bool {
        self.clients.matches(client) && self.property.matches(property)
    }

    /// Checks rule-specific parameters.
    pub fn validate(&self) -> Result<(), String> {
        match self.kind {
            RuleKind::Delete => Ok(()),
            RuleKind::Denature => match (self.param("text"), self.param("blur")) {
                (Some(_), Some(_)) => Err("DENATURE takes either text or blur, not both".into()),
                (None, None) => Err("DENATURE requires a text or blur parameter".into()),
                (None, Some(rate)) => match rate.parse::<f64>() {
                    Ok(r) if r > 0.0 && r.is_finite() => Ok(()),
                    _ => Err(format!("invalid blur rate {rate:?}")),
                },
                (Some(_), None) => Ok(()),
            },
            RuleKind::Summarize => match self.param("summarizer") {
                Some(_) => Ok(()),
                None => Err("SUMMARIZE requires a summarizer parameter".into()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Mediated {
    Release(Value),
    Blocked,
}

/// A named transformation from `(sensorId, value)` to a released value.
pub trait Summarizer: Send + Sync {
    fn summarize(&self, sensor_id: &str, value: &Value) -> Value;
}

/// Replaces a street address with its zip code via a lookup table; unknown
/// addresses fall back to a trailing five-digit group if one is present.
pub struct ZipSummarizer {
    table: HashMap<String, String>,
}

impl ZipSummarizer {
    pub fn new(table: HashMap<String, String>) -> Self {
        Self { table }
    }

    pub fn with_fixture() -> Self {
        let table = [
            ("21.5 Main St", "55455"),
            ("200 Union St SE, Minneapolis, MN 55455", "55455"),
            ("1 Infinite Loop", "95014"),
            ("350 Fifth Avenue", "10118"),
        ]
        .into_iter()
        .map(|(a, z)| (a.to_string(), z.to_string()))
        .collect();
        Self::new(table)
    }
}

impl Summarizer for ZipSummarizer {
    fn summarize(&self, _sensor_id: &str, value: &Value) -> Value {
        let text = value.to_string();
        if let Some(zip) = self.table.get(text.trim()) {
            return Value::Text(zip.clone());
        }
        let zip = text
            .split(|c: char| !c.is_ascii_digit())
            .filter(|tok| tok.len() == 5)
            .last()
            .unwrap_or("00000");
        Value::Text(zip.to_string())
    }
}

/// Mean of the last `window` numeric readings per sensor.
pub struct AverageSummarizer {
    window: usize,
    history: Mutex<HashMap<String, VecDeque<f64>>>,
}

impl AverageSummarizer {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            history: Mutex::new(HashMap::new()),
        }
    }
}

impl Summarizer for AverageSummarizer {
    fn summarize(&self, sensor_id: &str, value: &Value) -> Value {
        let Some(v) = value.as_f64() else {
            return value.clone();
        };
        let mut history = self.history.lock().unwrap();
        let buf = history.entry(sensor_id.to_string()).or_default();
        buf.push_back(v);
        while buf.len() > self.window {
            buf.pop_front();
        }
        Value::Double(buf.iter().sum::<f64>() / buf.len() as f64)
    }
}

/// Inserts random alphanumeric characters into `text`. The insertion count is
/// `max(1, round(rate * len))`; output never contains the original as a run.
pub fn blur_text(text: &str, rate: f64, rng: &mut impl Rng) -> String {
    const ALPHABET: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789#*";
    let original: Vec<char> = text.chars().collect();
    let count = ((rate * original.len() as f64).round() as usize).max(1);
    loop {
        let mut out = original.clone();
        for _ in 0..count {
            let pos = if out.len() <= 1 {
                out.len()
            } else {
                rng.gen_range(1..out.len())
            };
            let c = ALPHABET[rng.gen_range(0..ALPHABET.len())] as char;
            out.insert(pos, c);
        }
        let out: String = out.into_iter().collect();
        if text.is_empty() || !out.contains(text) {
            return out;
        }
    }
}

struct SensorPolicy {
    owner: String,
    rules: Arc<Vec<PolicyRule>>,
}

/// Policy table plus summarizer registry.
///
/// Reads take a snapshot of a sensor's rule list; `set_policy` swaps the list
/// atomically so a concurrent `apply_policy` sees either the old or the new
/// rules, never a mix.
pub struct Mediator {
    policies: RwLock<HashMap<String, SensorPolicy>>,
    summarizers: RwLock<BTreeMap<String, Arc<dyn Summarizer>>>,
    rng: Mutex<ChaCha8Rng>,
}

impl Default for Mediator {
    fn default() -> Self {
        Self::new(0)
    }
}

impl Mediator {
    pub fn new(seed: u64) -> Self {
        let mediator = Self {
            policies: RwLock::new(HashMap::new()),
            summarizers: RwLock::new(BTreeMap::new()),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        };
        mediator.register_summarizer("zip", Arc::new(ZipSummarizer::with_fixture()));
        mediator.register_summarizer("average", Arc::new(AverageSummarizer::new(3)));
        mediator
    }

    pub fn register_summarizer(&self, name: &str, summarizer: Arc<dyn Summarizer>) {
        self.summarizers
            .write()
            .unwrap()
            .insert(name.to_string(), summarizer);
    }

    /// Declares the owner of a sensor. Only the owner may later set policy.
    pub fn register_sensor(&self, sensor_id: &str, owner: &str) {
        self.policies
            .write()
            .unwrap()
            .entry(sensor_id.to_string())
            .and_modify(|p| p.owner = owner.to_string())
            .or_insert_with(|| SensorPolicy {
                owner: owner.to_string(),
                rules: Arc::new(Vec::new()),
            });
    }

    pub fn forget_sensor(&self, sensor_id: &str) {
        self.policies.write().unwrap().remove(sensor_id);
    }

    pub fn set_policy(
        &self,
        sensor_id: &str,
        issuer: &str,
        rules: Vec<PolicyRule>,
    ) -> Result<(), PrivacyError> {
        if rules.is_empty() {
            return Err(PrivacyError::Validation("rule list must be nonempty".into()));
        }
        for rule in &rules {
            rule.validate().map_err(PrivacyError::Validation)?;
        }
        let mut policies = self.policies.write().unwrap();
        let entry = policies
            .get_mut(sensor_id)
            .ok_or_else(|| PrivacyError::UnknownSensor(sensor_id.to_string()))?;
        if entry.owner != issuer {
            return Err(PrivacyError::NotOwner {
                sensor: sensor_id.to_string(),
                issuer: issuer.to_string(),
            });
        }
        entry.rules = Arc::new(rules);
        Ok(())
    }

    pub fn rules(&self, sensor_id: &str) -> Vec<PolicyRule> {
        self.policies
            .read()
            .unwrap()
            .get(sensor_id)
            .map(|p| p.rules.as_ref().clone())
            .unwrap_or_default()
    }

    /// Returns the first rule matching `(client, property)` for the sensor.
    pub fn matching_rule(&self, sensor_id: &str, client: &str, property: &str) -> Option<PolicyRule> {
        let rules = self
            .policies
            .read()
            .unwrap()
            .get(sensor_id)
            .map(|p| Arc::clone(&p.rules))?;
        rules.iter().find(|r| r.applies(client, property)).cloned()
    }

    pub fn apply_policy(
        &self,
        sensor_id: &str,
        client: &str,
        property: &str,
        value: Value,
    ) -> Result<Mediated, PrivacyError> {
        match self.matching_rule(sensor_id, client, property) {
            None => Ok(Mediated::Release(value)),
            Some(rule) => self.apply_rule(&rule, sensor_id, value),
        }
    }

    pub fn apply_rule(
        &self,
        rule: &PolicyRule,
        sensor_id: &str,
        value: Value,
    ) -> Result<Mediated, PrivacyError> {
        match rule.kind {
            RuleKind::Delete => Ok(Mediated::Blocked),
            RuleKind::Denature => {
                if let Some(text) = rule.param("text") {
                    return Ok(Mediated::Release(Value::Text(text.to_string())));
                }
                let rate: f64 = rule
                    .param("blur")
                    .and_then(|r| r.parse().ok())
                    .unwrap_or(0.5);
                let blurred = {
                    let mut rng = self.rng.lock().unwrap();
                    blur_text(&value.to_string(), rate, &mut *rng)
                };
                Ok(Mediated::Release(Value::Text(blurred)))
            }
            RuleKind::Summarize => {
                let name = rule.param("summarizer").unwrap_or_default();
                let summarizer = self
                    .summarizers
                    .read()
                    .unwrap()
                    .get(name)
                    .cloned()
                    .ok_or_else(|| PrivacyError::SummarizerMissing(name.to_string()))?;
                Ok(Mediated::Release(summarizer.summarize(sensor_id, &value)))
            }
        }
    }

    /// Reseeds the blur generator.
    pub fn reseed(&self, seed: u64) {
        *self.rng.lock().unwrap() = ChaCha8Rng::seed_from_u64(seed);
    }
}
