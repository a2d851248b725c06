//! Length-prefixed JSON frames: `u32` big-endian byte length, then a UTF-8
//! document `{type, version, sender, payload}`.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;
pub const MAX_FRAME: usize = 16 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MsgType {
    JoinReq,
    JoinAck,
    JoinReject,
    Heartbeat,
    DeviceRegister,
    DeviceFailover,
    LeaderList,
    Promote,
    QueryFwd,
    QueryResult,
    // registry membership
    Register,
    ListReq,
    Leave,
    LeaderDown,
    // liveness probes and generic replies
    Ping,
    Pong,
    Ack,
    Error,
    // client sessions
    Hello,
    Challenge,
    Auth,
    AuthOk,
    Query,
    Result,
    Push,
    Close,
    Closed,
    Cancel,
    Tasks,
    TaskList,
    // scenario coordination
    Clock,
    ClockAck,
    Snapshot,
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    #[serde(rename = "type")]
    pub ty: MsgType,
    pub version: u32,
    pub sender: String,
    pub payload: serde_json::Value,
}

impl Message {
    pub fn new(ty: MsgType, sender: &str, payload: impl Serialize) -> Self {
        Self {
            ty,
            version: PROTOCOL_VERSION,
            sender: sender.to_string(),
            payload: serde_json::to_value(payload).expect("payload serializes"),
        }
    }

    pub fn payload<T: DeserializeOwned>(&self) -> io::Result<T> {
        serde_json::from_value(self.payload.clone())
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{:?} payload: {e}", self.ty)))
    }

    pub fn error(sender: &str, message: impl Into<String>) -> Self {
        Self::new(MsgType::Error, sender, serde_json::json!({ "message": message.into() }))
    }

    pub fn error_text(&self) -> Option<String> {
        (self.ty == MsgType::Error).then(|| {
            self.payload
                .get("message")
                .and_then(|m| m.as_str())
                .unwrap_or("error")
                .to_string()
        })
    }
}

pub fn write_frame(w: &mut impl Write, msg: &Message) -> io::Result<()> {
    let body = serde_json::to_vec(msg)?;
    if body.len() > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "frame too large"));
    }
    let mut buf = Vec::with_capacity(4 + body.len());
    buf.extend_from_slice(&(body.len() as u32).to_be_bytes());
    buf.extend_from_slice(&body);
    w.write_all(&buf)?;
    w.flush()
}

/// `Ok(None)` on a clean end of stream before a frame starts.
pub fn read_frame(r: &mut impl Read) -> io::Result<Option<Message>> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..])? {
            0 if got == 0 => return Ok(None),
            0 => return Err(io::ErrorKind::UnexpectedEof.into()),
            n => got += n,
        }
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "frame too large"));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    let text = std::str::from_utf8(&body).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    let msg: Message = serde_json::from_str(text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    if msg.version != PROTOCOL_VERSION {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unsupported protocol version {}", msg.version),
        ));
    }
    Ok(Some(msg))
}

pub fn resolve(addr: &str) -> io::Result<SocketAddr> {
    addr.to_socket_addrs()?
        .next()
        .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, format!("cannot resolve {addr}")))
}

pub fn connect(addr: &str, timeout: Duration) -> io::Result<TcpStream> {
    let stream = TcpStream::connect_timeout(&resolve(addr)?, timeout)?;
    stream.set_nodelay(true)?;
    Ok(stream)
}

/// One request, one reply, on a fresh connection.
pub fn rpc(addr: &str, msg: &Message, timeout: Duration) -> io::Result<Message> {
    let mut stream = connect(addr, timeout)?;
    stream.set_read_timeout(Some(timeout))?;
    stream.set_write_timeout(Some(timeout))?;
    write_frame(&mut stream, msg)?;
    read_frame(&mut stream)?.ok_or_else(|| io::ErrorKind::UnexpectedEof.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip() {
        let m = Message::new(MsgType::JoinReq, "edge-1", serde_json::json!({"edgeId": "edge-1", "n": 3}));
        let mut buf = Vec::new();
        write_frame(&mut buf, &m).unwrap();
        assert_eq!(u32::from_be_bytes(buf[..4].try_into().unwrap()) as usize, buf.len() - 4);
        let text = std::str::from_utf8(&buf[4..]).unwrap();
        assert!(text.contains("\"type\":\"JOIN_REQ\""));
        let mut r = &buf[..];
        assert_eq!(read_frame(&mut r).unwrap(), Some(m));
        assert_eq!(read_frame(&mut r).unwrap(), None);
    }

    #[test]
    fn truncated_frame_is_an_error() {
        let m = Message::new(MsgType::Ping, "a", ());
        let mut buf = Vec::new();
        write_frame(&mut buf, &m).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(read_frame(&mut &buf[..]).is_err());
        assert!(read_frame(&mut &buf[..2]).is_err());
    }

    #[test]
    fn foreign_version_is_rejected() {
        let mut m = Message::new(MsgType::Ping, "a", ());
        m.version = PROTOCOL_VERSION + 1;
        let mut buf = Vec::new();
        write_frame(&mut buf, &m).unwrap();
        let err = read_frame(&mut &buf[..]).unwrap_err();
        assert_eq!(err.kind(), io::ErrorKind::InvalidData);
    }

    #[test]
    fn wire_names_match_protocol() {
        for (ty, name) in [
            (MsgType::JoinAck, "JOIN_ACK"),
            (MsgType::JoinReject, "JOIN_REJECT"),
            (MsgType::Heartbeat, "HEARTBEAT"),
            (MsgType::DeviceRegister, "DEVICE_REGISTER"),
            (MsgType::DeviceFailover, "DEVICE_FAILOVER"),
            (MsgType::LeaderList, "LEADER_LIST"),
            (MsgType::Promote, "PROMOTE"),
            (MsgType::QueryFwd, "QUERY_FWD"),
            (MsgType::QueryResult, "QUERY_RESULT"),
        ] {
            assert_eq!(serde_json::to_value(ty).unwrap(), serde_json::json!(name));
        }
    }
}
