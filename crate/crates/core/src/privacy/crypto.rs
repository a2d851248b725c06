//! ECDSA (P-256, SHA-256) signatures and an ECIES-style hybrid cipher:
//! ephemeral P-256 ECDH, HKDF-SHA256 key derivation, AES-256-GCM.

use aes_gcm::aead::{Aead, KeyInit};
use aes_gcm::{Aes256Gcm, Nonce};
use hkdf::Hkdf;
use p256::ecdsa::signature::{Signer, Verifier};
use p256::ecdsa::{Signature, SigningKey, VerifyingKey};
use p256::elliptic_curve::sec1::ToEncodedPoint;
use p256::pkcs8::{DecodePrivateKey, DecodePublicKey, EncodePrivateKey, EncodePublicKey, LineEnding};
use rand::rngs::OsRng;
use rand::RngCore;
use sha2::Sha256;

use super::PrivacyError;

const HKDF_INFO: &[u8] = b"constellation/ecies/v1";
const POINT_LEN: usize = 65;
const NONCE_LEN: usize = 12;

#[derive(Clone)]
pub struct PrivateKey(p256::SecretKey);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey(p256::PublicKey);

impl std::fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PrivateKey(..)")
    }
}

impl PrivateKey {
    pub fn generate() -> Self {
        Self(p256::SecretKey::random(&mut OsRng))
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.0.public_key())
    }

    pub fn to_pem(&self) -> String {
        self.0
            .to_pkcs8_pem(LineEnding::LF)
            .expect("P-256 key encodes as PKCS#8")
            .to_string()
    }

    pub fn from_pem(pem: &str) -> Result<Self, PrivacyError> {
        p256::SecretKey::from_pkcs8_pem(pem)
            .map(Self)
            .map_err(|e| PrivacyError::MalformedKey(e.to_string()))
    }
}

impl PublicKey {
    pub fn to_pem(&self) -> String {
        self.0
            .to_public_key_pem(LineEnding::LF)
            .expect("P-256 key encodes as SPKI")
    }

    pub fn from_pem(pem: &str) -> Result<Self, PrivacyError> {
        p256::PublicKey::from_public_key_pem(pem)
            .map(Self)
            .map_err(|e| PrivacyError::MalformedKey(e.to_string()))
    }

    pub fn to_sec1(&self) -> Vec<u8> {
        self.0.to_encoded_point(false).as_bytes().to_vec()
    }

    pub fn from_sec1(bytes: &[u8]) -> Result<Self, PrivacyError> {
        p256::PublicKey::from_sec1_bytes(bytes)
            .map(Self)
            .map_err(|e| PrivacyError::MalformedKey(e.to_string()))
    }
}

/// Fixed-size (r || s) ECDSA signature.
pub fn sign(plaintext: &[u8], key: &PrivateKey) -> Vec<u8> {
    let signer = SigningKey::from(&key.0);
    let sig: Signature = signer.sign(plaintext);
    sig.to_bytes().to_vec()
}

pub fn verify(plaintext: &[u8], signature: &[u8], key: &PublicKey) -> bool {
    let Ok(sig) = Signature::from_slice(signature) else {
        return false;
    };
    VerifyingKey::from(&key.0).verify(plaintext, &sig).is_ok()
}

fn derive_key(shared: &[u8], ephemeral: &[u8]) -> [u8; 32] {
    let hk = Hkdf::<Sha256>::new(Some(ephemeral), shared);
    let mut okm = [0u8; 32];
    hk.expand(HKDF_INFO, &mut okm)
        .expect("32 bytes is a valid HKDF output length");
    okm
}

/// Output layout: `ephemeral point (65) || nonce (12) || AES-GCM ciphertext+tag`.
pub fn encrypt(plaintext: &[u8], recipient: &PublicKey) -> Vec<u8> {
    let ephemeral = p256::ecdh::EphemeralSecret::random(&mut OsRng);
    let eph_point = ephemeral.public_key().to_encoded_point(false);
    let shared = ephemeral.diffie_hellman(&recipient.0);
    let key = derive_key(&shared.raw_secret_bytes()[..], eph_point.as_bytes());
    let cipher = Aes256Gcm::new_from_slice(&key).expect("key length");
    let mut nonce = [0u8; NONCE_LEN];
    OsRng.fill_bytes(&mut nonce);
    let body = cipher
        .encrypt(&Nonce::from(nonce), plaintext)
        .expect("AES-GCM encryption does not fail for in-memory buffers");
    let mut out = Vec::with_capacity(POINT_LEN + NONCE_LEN + body.len());
    out.extend_from_slice(eph_point.as_bytes());
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&body);
    out
}

pub fn decrypt(ciphertext: &[u8], recipient: &PrivateKey) -> Result<Vec<u8>, PrivacyError> {
    if ciphertext.len() < POINT_LEN + NONCE_LEN + 16 {
        return Err(PrivacyError::DecryptionFailure);
    }
    let (point, rest) = ciphertext.split_at(POINT_LEN);
    let (nonce, body) = rest.split_at(NONCE_LEN);
    let eph = p256::PublicKey::from_sec1_bytes(point).map_err(|_| PrivacyError::DecryptionFailure)?;
    let shared = p256::ecdh::diffie_hellman(recipient.0.to_nonzero_scalar(), eph.as_affine());
    let key = derive_key(&shared.raw_secret_bytes()[..], point);
    let cipher = Aes256Gcm::new_from_slice(&key).expect("key length");
    cipher
        .decrypt(&Nonce::from(<[u8; NONCE_LEN]>::try_from(nonce).expect("split length")), body)
        .map_err(|_| PrivacyError::DecryptionFailure)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_verify_roundtrip_and_rejections() {
        let k = PrivateKey::generate();
        let other = PrivateKey::generate();
        let msg = b"SENSE Temperature FROM Thermometer";
        let sig = sign(msg, &k);
        assert!(verify(msg, &sig, &k.public_key()));
        assert!(!verify(msg, &sig, &other.public_key()));
        let mut bad = msg.to_vec();
        bad[0] ^= 1;
        assert!(!verify(&bad, &sig, &k.public_key()));
        assert!(!verify(msg, &sig[..10], &k.public_key()));
    }

    #[test]
    fn encrypt_roundtrip_wrong_key_and_empty() {
        let k = PrivateKey::generate();
        let ct = encrypt(b"hello edge", &k.public_key());
        assert_eq!(decrypt(&ct, &k).unwrap(), b"hello edge");
        let other = PrivateKey::generate();
        assert!(matches!(decrypt(&ct, &other), Err(PrivacyError::DecryptionFailure)));
        let empty = encrypt(b"", &k.public_key());
        assert_eq!(decrypt(&empty, &k).unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn pem_roundtrip() {
        let k = PrivateKey::generate();
        let k2 = PrivateKey::from_pem(&k.to_pem()).unwrap();
        assert_eq!(k.public_key(), k2.public_key());
        let p = PublicKey::from_pem(&k.public_key().to_pem()).unwrap();
        assert_eq!(p, k.public_key());
        assert!(matches!(
            PublicKey::from_pem("garbage"),
            Err(PrivacyError::MalformedKey(_))
        ));
    }
}
