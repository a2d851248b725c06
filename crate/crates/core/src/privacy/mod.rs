//! Privacy mediation (delete / denature / summarize) and the client↔node
//! signing and encryption envelope.

mod crypto;
mod envelope;
mod keystore;
mod policy;

use thiserror::Error;

pub use crypto::{decrypt, encrypt, sign, verify, PrivateKey, PublicKey};
pub use envelope::{client_hello, new_nonce, Authenticator, Envelope};
pub use keystore::Keystore;
pub use policy::{
    blur_text, AverageSummarizer, ClientSelector, Mediated, Mediator, PolicyRule, PropertySelector, RuleKind,
    Summarizer, ZipSummarizer,
};

#[derive(Debug, Error)]
pub enum PrivacyError {
    #[error("{issuer} does not own sensor {sensor}")]
    NotOwner { sensor: String, issuer: String },
    #[error("unknown sensor {0}")]
    UnknownSensor(String),
    #[error("invalid policy: {0}")]
    Validation(String),
    #[error("summarizer {0:?} is not registered")]
    SummarizerMissing(String),
    #[error("malformed key: {0}")]
    MalformedKey(String),
    #[error("no key for principal {0}")]
    UnknownPrincipal(String),
    #[error("decryption failed")]
    DecryptionFailure,
    #[error("signature verification failed")]
    BadSignature,
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
