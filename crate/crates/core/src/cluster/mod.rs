//! Multi-node fabric: registry, leaders and edges over framed TCP.

pub mod model;
pub mod node;
pub mod proto;
pub mod wire;

use thiserror::Error;

pub use model::*;
pub use node::{Node, NodeConfig, EDGE_TTL_MS, RPC_TIMEOUT};
pub use proto::*;
pub use wire::{read_frame, rpc, write_frame, Message, MsgType, PROTOCOL_VERSION};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("no leader available")]
    NoLeaderAvailable,
    #[error("promotion of {0} failed")]
    PromotionFailed(String),
    #[error("not found in cluster")]
    NotFound,
    #[error("leader is at its edge threshold")]
    ThresholdFull,
    #[error("no registry configured")]
    NoRegistry,
    #[error("bootstrap line {line}: {text:?} is not `nodeId host:port`")]
    BadBootstrap { line: usize, text: String },
    #[error("leader store: {0}")]
    Store(String),
    #[error("transport: {0}")]
    Io(String),
    #[error("protocol: {0}")]
    Protocol(String),
}

#[cfg(test)]
mod tests;
