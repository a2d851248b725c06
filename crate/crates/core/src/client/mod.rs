//! Client connection: authenticated session to one node, blocking
//! statements, and a stream of pushed periodic results.

use std::collections::HashSet;
use std::net::{Shutdown, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use thiserror::Error;

use crate::cluster::{
    read_frame, write_frame, Challenge, ClientReply, Closed, Hello, Message, MsgType, SealedRequest, TaskList,
};
use crate::privacy::{client_hello, Envelope, PrivateKey, PublicKey};
use crate::runtime::{Submission, TaskInfo, TaskResult};

pub const REPLY_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot connect to {addr}: {reason}")]
    ConnectFailure { addr: String, reason: String },
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error("connection is closed")]
    Closed,
    #[error("transport error: {0}")]
    Transport(String),
}

struct Shared {
    issued: Mutex<HashSet<String>>,
}

pub struct Connection {
    node_address: String,
    client_id: String,
    node_id: String,
    key: PrivateKey,
    node_public: PublicKey,
    writer: Arc<Mutex<TcpStream>>,
    replies: Receiver<Message>,
    pushes: Receiver<TaskResult>,
    shared: Arc<Shared>,
    open: bool,
    next_id: u64,
}

fn transport(e: impl std::fmt::Display) -> ClientError {
    ClientError::Transport(e.to_string())
}

fn open_envelope(env: &Envelope, key: &PrivateKey, node: &PublicKey) -> Result<Vec<u8>, ClientError> {
    env.open(key, node).map_err(transport)
}

impl Connection {
    /// Connects and runs the challenge handshake with `key`, which must be
    /// registered in the node's keystore under `client_id`.
    pub fn connect(address: &str, client_id: &str, key: PrivateKey) -> Result<Connection, ClientError> {
        let fail = |reason: String| ClientError::ConnectFailure {
            addr: address.to_string(),
            reason,
        };
        let mut stream = crate::cluster::wire::connect(address, Duration::from_secs(5)).map_err(|e| fail(e.to_string()))?;
        stream.set_read_timeout(Some(REPLY_TIMEOUT)).map_err(transport)?;
        let hello = Message::new(
            MsgType::Hello,
            client_id,
            Hello {
                client: client_id.to_string(),
            },
        );
        write_frame(&mut stream, &hello).map_err(|e| fail(e.to_string()))?;
        let challenge = match read_frame(&mut stream) {
            Ok(Some(m)) if m.ty == MsgType::Challenge => m.payload::<Challenge>().map_err(transport)?,
            Ok(Some(m)) => return Err(ClientError::AuthFailure(m.error_text().unwrap_or_default())),
            Ok(None) => return Err(fail("closed during handshake".into())),
            Err(e) => return Err(fail(e.to_string())),
        };
        let node_public = PublicKey::from_pem(&challenge.node_key).map_err(transport)?;
        let env = client_hello(client_id, &key, &challenge.nonce, &node_public);
        write_frame(&mut stream, &Message::new(MsgType::Auth, client_id, env)).map_err(transport)?;
        match read_frame(&mut stream) {
            Ok(Some(m)) if m.ty == MsgType::AuthOk => {}
            Ok(Some(m)) => {
                return Err(ClientError::AuthFailure(
                    m.error_text().unwrap_or_else(|| format!("unexpected {:?}", m.ty)),
                ))
            }
            Ok(None) => return Err(ClientError::AuthFailure("connection closed by node".into())),
            Err(e) => return Err(transport(e)),
        }
        // the reader blocks indefinitely; replies have their own timeout
        stream.set_read_timeout(None).map_err(transport)?;
        let writer = Arc::new(Mutex::new(stream.try_clone().map_err(transport)?));
        let (reply_tx, replies) = mpsc::channel();
        let (push_tx, pushes) = mpsc::channel();
        let shared = Arc::new(Shared {
            issued: Mutex::new(HashSet::new()),
        });
        let reader = Reader {
            key: key.clone(),
            node_public: node_public.clone(),
            shared: shared.clone(),
            replies: reply_tx,
            pushes: push_tx,
        };
        thread::spawn(move || reader.run(stream));
        Ok(Connection {
            node_address: address.to_string(),
            client_id: client_id.to_string(),
            node_id: challenge.node_id,
            key,
            node_public,
            writer,
            replies,
            pushes,
            shared,
            open: true,
            next_id: 1,
        })
    }

    pub fn node_address(&self) -> &str {
        &self.node_address
    }

    pub fn node_id(&self) -> &str {
        &self.node_id
    }

    pub fn client_id(&self) -> &str {
        &self.client_id
    }

    pub fn is_open(&self) -> bool {
        self.open
    }

    /// Task ids this connection has been handed.
    pub fn task_ids(&self) -> Vec<String> {
        let mut v: Vec<String> = self.shared.issued.lock().unwrap().iter().cloned().collect();
        v.sort();
        v
    }

    fn send(&mut self, msg: &Message) -> Result<(), ClientError> {
        let r = write_frame(&mut *self.writer.lock().unwrap(), msg).map_err(transport);
        if r.is_err() {
            self.drop_transport();
        }
        r
    }

    fn await_reply(&mut self, want: MsgType) -> Result<Message, ClientError> {
        match self.replies.recv_timeout(REPLY_TIMEOUT) {
            Ok(m) if m.ty == want => Ok(m),
            Ok(m) => {
                let e = m.error_text().unwrap_or_else(|| format!("unexpected {:?}", m.ty));
                Err(ClientError::Transport(e))
            }
            Err(RecvTimeoutError::Timeout) => {
                self.drop_transport();
                Err(ClientError::Transport("timed out waiting for the node".into()))
            }
            Err(RecvTimeoutError::Disconnected) => {
                self.drop_transport();
                Err(ClientError::Transport("connection lost".into()))
            }
        }
    }

    fn drop_transport(&mut self) {
        self.open = false;
        let _ = self.writer.lock().unwrap().shutdown(Shutdown::Both);
        while self.pushes.try_recv().is_ok() {}
    }

    /// Runs one statement. One-shot statements return their result;
    /// periodic ones return a task id and stream results afterwards.
    pub fn query(&mut self, text: &str) -> Result<ClientReply, ClientError> {
        if !self.open {
            return Err(ClientError::Closed);
        }
        let id = self.next_id;
        self.next_id += 1;
        let env = Envelope::seal(text.as_bytes(), &self.client_id, &self.key, &self.node_public);
        self.send(&Message::new(MsgType::Query, &self.client_id, SealedRequest { id, envelope: env }))?;
        let m = self.await_reply(MsgType::Result)?;
        let req: SealedRequest = m.payload().map_err(transport)?;
        let bytes = open_envelope(&req.envelope, &self.key, &self.node_public)?;
        serde_json::from_slice(&bytes).map_err(transport)
    }

    /// Server-side view of this client's tasks.
    pub fn tasks(&mut self) -> Result<Vec<TaskInfo>, ClientError> {
        if !self.open {
            return Err(ClientError::Closed);
        }
        self.send(&Message::new(MsgType::Tasks, &self.client_id, ()))?;
        let m = self.await_reply(MsgType::TaskList)?;
        Ok(m.payload::<TaskList>().map_err(transport)?.tasks)
    }

    /// Next pushed result, waiting up to `timeout`.
    pub fn next_result(&self, timeout: Duration) -> Option<TaskResult> {
        if !self.open {
            return None;
        }
        self.pushes.recv_timeout(timeout).ok()
    }

    pub fn try_results(&self) -> Vec<TaskResult> {
        if !self.open {
            return Vec::new();
        }
        self.pushes.try_iter().collect()
    }

    /// Cancels every task of this client on the node and closes the socket.
    /// Idempotent; returns 0 when already closed or the node is gone.
    pub fn close(&mut self) -> usize {
        if !self.open {
            return 0;
        }
        let cancelled = match self.send(&Message::new(MsgType::Close, &self.client_id, ())) {
            Ok(()) => self
                .await_reply(MsgType::Closed)
                .ok()
                .and_then(|m| m.payload::<Closed>().ok())
                .map_or(0, |c| c.cancelled),
            Err(_) => 0,
        };
        self.drop_transport();
        cancelled
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        self.close();
    }
}

struct Reader {
    key: PrivateKey,
    node_public: PublicKey,
    shared: Arc<Shared>,
    replies: Sender<Message>,
    pushes: Sender<TaskResult>,
}

impl Reader {
    fn run(self, mut stream: TcpStream) {
        while let Ok(Some(m)) = read_frame(&mut stream) {
            match m.ty {
                MsgType::Push => {
                    let Some(result) = m
                        .payload::<Envelope>()
                        .ok()
                        .and_then(|env| env.open(&self.key, &self.node_public).ok())
                        .and_then(|b| serde_json::from_slice::<TaskResult>(&b).ok())
                    else {
                        continue;
                    };
                    // only ids this connection was handed are delivered
                    if self.shared.issued.lock().unwrap().contains(&result.task_id) {
                        let _ = self.pushes.send(result);
                    }
                }
                MsgType::Result => {
                    // record issued task ids before any push for them is read
                    if let Some(reply) = m
                        .payload::<SealedRequest>()
                        .ok()
                        .and_then(|r| r.envelope.open(&self.key, &self.node_public).ok())
                        .and_then(|b| serde_json::from_slice::<ClientReply>(&b).ok())
                    {
                        if let ClientReply::Ok {
                            submission: Submission::Scheduled { task_id },
                        } = reply
                        {
                            self.shared.issued.lock().unwrap().insert(task_id);
                        }
                    }
                    if self.replies.send(m).is_err() {
                        return;
                    }
                }
                _ => {
                    if self.replies.send(m).is_err() {
                        return;
                    }
                }
            }
        }
    }
}
