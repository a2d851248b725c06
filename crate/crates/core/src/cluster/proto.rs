//! Payload documents carried inside [`Message`](super::Message) frames.

use serde::{Deserialize, Serialize};

use super::model::{LeaderList, NodeAddr};
use crate::cql::{CqlError, FindSpec, Query};
use crate::device::DeviceManifest;
use crate::privacy::Envelope;
use crate::runtime::{RuntimeError, Submission, TaskInfo};
use crate::Millis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Registry,
    Leader,
    Edge,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Registry => "registry",
            Role::Leader => "leader",
            Role::Edge => "edge",
        }
    }
}

impl std::str::FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "registry" => Ok(Role::Registry),
            "leader" => Ok(Role::Leader),
            "edge" => Ok(Role::Edge),
            other => Err(format!("unknown role {other:?} (expected leader, edge or registry)")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Register {
    pub node: NodeAddr,
    pub role: Role,
    #[serde(default)]
    pub potential: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JoinReq {
    pub edge: NodeAddr,
    pub devices: Vec<DeviceManifest>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JoinAck {
    pub leader: NodeAddr,
    /// Orphaned devices handed to the joining edge.
    #[serde(default)]
    pub adopt: Vec<DeviceManifest>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JoinReject {
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "from", rename_all = "camelCase")]
pub enum Heartbeat {
    Edge { edge: String },
    #[serde(rename_all = "camelCase")]
    Leader { leader: NodeAddr, edges: Vec<String> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HeartbeatAck {
    /// False when the receiver does not count the sender as a member.
    pub known: bool,
    #[serde(default)]
    pub list: Option<LeaderList>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeviceRegister {
    pub edge: String,
    pub devices: Vec<DeviceManifest>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeviceFailover {
    pub failed_edge: String,
    pub devices: Vec<DeviceManifest>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Promote {
    pub list: LeaderList,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QueryFwd {
    pub propagation_id: String,
    pub client: String,
    #[serde(default)]
    pub find: Option<FindSpec>,
    pub query: Query,
    /// Remaining leader-to-leader hops; the first leader fills it in.
    #[serde(default)]
    pub hops: Option<usize>,
    pub from: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QueryResultMsg {
    pub found: bool,
    #[serde(default)]
    pub duplicate: bool,
    /// Node that executed the statement.
    #[serde(default)]
    pub served_at: Option<String>,
    #[serde(default)]
    pub reply: Option<ClientReply>,
}

impl QueryResultMsg {
    pub fn not_found() -> Self {
        Self {
            found: false,
            duplicate: false,
            served_at: None,
            reply: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClockMsg {
    pub now: Millis,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Hello {
    pub client: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Challenge {
    pub node_id: String,
    pub nonce: String,
    /// SPKI PEM of the node key.
    pub node_key: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SealedRequest {
    pub id: u64,
    pub envelope: Envelope,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Closed {
    pub cancelled: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskList {
    pub tasks: Vec<TaskInfo>,
}

/// Reply to one client statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "camelCase")]
pub enum ClientReply {
    Ok { submission: Submission },
    Error(ErrorReply),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ErrorReply {
    /// `SyntaxError`, `ValidationError`, `NotFound`, `DeviceError`, ...
    pub class: String,
    pub message: String,
    #[serde(default)]
    pub offset: Option<usize>,
}

impl ErrorReply {
    pub fn new(class: &str, message: impl Into<String>) -> Self {
        Self {
            class: class.to_string(),
            message: message.into(),
            offset: None,
        }
    }
}

impl From<&RuntimeError> for ErrorReply {
    fn from(e: &RuntimeError) -> Self {
        let class = match e {
            RuntimeError::Cql(CqlError::Syntax { .. }) => "SyntaxError",
            RuntimeError::Cql(CqlError::Validation { .. }) => "ValidationError",
            RuntimeError::Device(_) => "DeviceError",
            RuntimeError::Privacy(_) => "PrivacyError",
            RuntimeError::UnknownDevSet(_) => "UnknownDevSet",
            RuntimeError::Gateway(_) => "GatewayError",
            RuntimeError::UnknownTask(_) => "UnknownTask",
        };
        let offset = match e {
            RuntimeError::Cql(c) => Some(c.offset()),
            _ => None,
        };
        Self {
            class: class.to_string(),
            message: e.to_string(),
            offset,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClusterEvent {
    pub ts: Millis,
    pub node: String,
    pub kind: String,
    pub detail: String,
}

/// Point-in-time state of one node, used by scenario assertions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NodeSnapshot {
    pub node_id: String,
    pub role: Role,
    pub address: String,
    pub now: Millis,
    pub leader: Option<String>,
    pub devices: Vec<String>,
    pub edges: Vec<String>,
    pub orphans: Vec<String>,
    pub list: LeaderList,
    pub edge_count: usize,
    pub events: Vec<ClusterEvent>,
}
