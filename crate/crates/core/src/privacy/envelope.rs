//! Signed and encrypted message envelope plus the client hello handshake.

use std::collections::{HashMap, HashSet};
use std::sync::Mutex;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::crypto::{self, PrivateKey, PublicKey};
use super::keystore::Keystore;
use super::PrivacyError;

mod b64 {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&B64.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        B64.decode(s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    pub sender: String,
    /// Keystore principal whose public key verifies `signature`.
    pub key_ref: String,
    #[serde(with = "b64")]
    pub payload: Vec<u8>,
    #[serde(with = "b64")]
    pub signature: Vec<u8>,
}

impl Envelope {
    /// Signs `plaintext` with the sender key, then encrypts it to `recipient`.
    pub fn seal(plaintext: &[u8], sender: &str, sender_key: &PrivateKey, recipient: &PublicKey) -> Self {
        Self {
            sender: sender.to_string(),
            key_ref: sender.to_string(),
            payload: crypto::encrypt(plaintext, recipient),
            signature: crypto::sign(plaintext, sender_key),
        }
    }

    pub fn open(&self, recipient_key: &PrivateKey, sender_public: &PublicKey) -> Result<Vec<u8>, PrivacyError> {
        let plaintext = crypto::decrypt(&self.payload, recipient_key)?;
        if !crypto::verify(&plaintext, &self.signature, sender_public) {
            return Err(PrivacyError::BadSignature);
        }
        Ok(plaintext)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Hello {
    client: String,
    nonce: String,
}

pub fn new_nonce() -> String {
    let mut bytes = [0u8; 16];
    rand::rngs::OsRng.fill_bytes(&mut bytes);
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Builds the hello envelope a client sends in answer to a node challenge.
pub fn client_hello(client: &str, key: &PrivateKey, nonce: &str, node_public: &PublicKey) -> Envelope {
    let hello = serde_json::to_vec(&Hello {
        client: client.to_string(),
        nonce: nonce.to_string(),
    })
    .expect("hello serializes");
    Envelope::seal(&hello, client, key, node_public)
}

/// Node-side handshake state. Every connection gets a fresh nonce which may
/// be redeemed once.
pub struct Authenticator {
    node_key: PrivateKey,
    keystore: Keystore,
    issued: Mutex<HashMap<String, ()>>,
    redeemed: Mutex<HashSet<String>>,
}

impl Authenticator {
    pub fn new(node_key: PrivateKey, keystore: Keystore) -> Self {
        Self {
            node_key,
            keystore,
            issued: Mutex::new(HashMap::new()),
            redeemed: Mutex::new(HashSet::new()),
        }
    }

    pub fn node_public(&self) -> PublicKey {
        self.node_key.public_key()
    }

    pub fn node_key(&self) -> &PrivateKey {
        &self.node_key
    }

    pub fn keystore(&self) -> &Keystore {
        &self.keystore
    }

    pub fn issue_nonce(&self) -> String {
        let nonce = new_nonce();
        self.issued.lock().unwrap().insert(nonce.clone(), ());
        nonce
    }

    /// Verifies a hello against the nonce issued on this connection and
    /// returns the authenticated client id.
    pub fn authenticate(&self, hello: &Envelope, expected_nonce: &str) -> Result<String, PrivacyError> {
        let fail = |why: &str| PrivacyError::AuthFailure(why.to_string());
        let sender_key = self
            .keystore
            .public(&hello.key_ref)
            .map_err(|_| fail("unknown client key"))?;
        let plaintext = hello
            .open(&self.node_key, &sender_key)
            .map_err(|_| fail("bad hello envelope"))?;
        let hello_body: Hello = serde_json::from_slice(&plaintext).map_err(|_| fail("malformed hello"))?;
        if hello_body.client != hello.sender || hello_body.client != hello.key_ref {
            return Err(fail("sender mismatch"));
        }
        if hello_body.nonce != expected_nonce {
            return Err(fail("stale nonce"));
        }
        if self.issued.lock().unwrap().remove(&hello_body.nonce).is_none()
            || !self.redeemed.lock().unwrap().insert(hello_body.nonce.clone())
        {
            return Err(fail("nonce already used"));
        }
        Ok(hello_body.client)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn setup() -> (tempfile::TempDir, Authenticator, PrivateKey) {
        let dir = tempfile::tempdir().unwrap();
        let ks = Keystore::open(dir.path()).unwrap();
        let node = ks.generate("node").unwrap();
        let client = ks.generate("app1").unwrap();
        (dir, Authenticator::new(node, ks), client)
    }

    #[test]
    fn valid_hello_binds_client() {
        let (_d, auth, key) = setup();
        let nonce = auth.issue_nonce();
        let hello = client_hello("app1", &key, &nonce, &auth.node_public());
        assert_eq!(auth.authenticate(&hello, &nonce).unwrap(), "app1");
    }

    #[test]
    fn unknown_key_is_refused() {
        let (_d, auth, _key) = setup();
        let stranger = PrivateKey::generate();
        let nonce = auth.issue_nonce();
        let hello = client_hello("ghost", &stranger, &nonce, &auth.node_public());
        assert!(matches!(auth.authenticate(&hello, &nonce), Err(PrivacyError::AuthFailure(_))));
    }

    #[test]
    fn replayed_hello_is_refused() {
        let (_d, auth, key) = setup();
        let nonce = auth.issue_nonce();
        let hello = client_hello("app1", &key, &nonce, &auth.node_public());
        auth.authenticate(&hello, &nonce).unwrap();
        // replay on a new connection: a fresh nonce was issued there
        let fresh = auth.issue_nonce();
        assert!(matches!(auth.authenticate(&hello, &fresh), Err(PrivacyError::AuthFailure(_))));
        // and the old nonce cannot be redeemed twice
        assert!(matches!(auth.authenticate(&hello, &nonce), Err(PrivacyError::AuthFailure(_))));
    }

    #[test]
    fn impersonation_is_refused() {
        let (_d, auth, _key) = setup();
        let mallory = PrivateKey::generate();
        let nonce = auth.issue_nonce();
        // claims to be app1 but signs with another key
        let hello = client_hello("app1", &mallory, &nonce, &auth.node_public());
        assert!(matches!(auth.authenticate(&hello, &nonce), Err(PrivacyError::AuthFailure(_))));
    }

    #[test]
    fn single_byte_tampering_is_always_detected() {
        let sender = PrivateKey::generate();
        let recipient = PrivateKey::generate();
        let env = Envelope::seal(b"{\"value\":21.5}", "node", &sender, &recipient.public_key());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let mut t = env.clone();
            let total = t.payload.len() + t.signature.len();
            let idx = rng.gen_range(0..total);
            let flip = rng.gen_range(1..=255u8);
            if idx < t.payload.len() {
                t.payload[idx] ^= flip;
            } else {
                t.signature[idx - t.payload.len()] ^= flip;
            }
            assert!(t.open(&recipient, &sender.public_key()).is_err());
        }
        assert!(env.open(&recipient, &sender.public_key()).is_ok());
    }
}
