use serde::{Deserialize, Serialize};

use crate::privacy::PolicyRule;

/// A parsed CQL statement. Each variant carries exactly one body record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body")]
pub enum Query {
    Find(FindSpec),
    Sense(SenseSpec),
    Actuate(ActuateSpec),
    Event(EventSpec),
    Denature(DenatureSpec),
    GatewayImport(GatewaySpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryKind {
    Find,
    Sense,
    Actuate,
    Event,
    Denature,
    GatewayImport,
}

impl Query {
    pub fn kind(&self) -> QueryKind {
        match self {
            Query::Find(_) => QueryKind::Find,
            Query::Sense(_) => QueryKind::Sense,
            Query::Actuate(_) => QueryKind::Actuate,
            Query::Event(_) => QueryKind::Event,
            Query::Denature(_) => QueryKind::Denature,
            Query::GatewayImport(_) => QueryKind::GatewayImport,
        }
    }
}

/// `attribute=value` equality predicate of a FIND statement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predicate {
    pub attribute: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindSpec {
    pub devtype: String,
    pub predicates: Vec<Predicate>,
    pub alias: String,
}

/// All durations are milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SenseSpec {
    pub property: String,
    pub target: String,
    pub delta: Option<u64>,
    pub error: Option<f64>,
    pub period: Option<u64>,
    pub deadline: Option<u64>,
    pub cardinality: u32,
}

impl SenseSpec {
    pub fn new(property: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            property: property.into(),
            target: target.into(),
            delta: None,
            error: None,
            period: None,
            deadline: None,
            cardinality: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuateSpec {
    pub action: String,
    pub target: String,
    pub params: Vec<(String, String)>,
    pub period: Option<u64>,
    pub deadline: Option<u64>,
    pub cardinality: u32,
}

impl ActuateSpec {
    pub fn new(action: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            action: action.into(),
            target: target.into(),
            params: Vec::new(),
            period: None,
            deadline: None,
            cardinality: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
}

impl Comparator {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Gt => ">",
            Comparator::Le => "<=",
            Comparator::Ge => ">=",
            Comparator::Eq => "==",
        }
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparator::Lt => lhs < rhs,
            Comparator::Gt => lhs > rhs,
            Comparator::Le => lhs <= rhs,
            Comparator::Ge => lhs >= rhs,
            Comparator::Eq => lhs == rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Trigger {
    Condition {
        property: String,
        comparator: Comparator,
        threshold: f64,
        target: String,
    },
    Periodic {
        period: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub name: String,
    pub trigger: Trigger,
    pub body: ActuateSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenatureSpec {
    pub sensor_id: String,
    pub rules: Vec<PolicyRule>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewaySpec {
    pub url: String,
    pub token: Option<String>,
}
