use std::fs;
use std::path::{Path, PathBuf};

use super::crypto::{PrivateKey, PublicKey};
use super::PrivacyError;

/// Directory of PEM keys named by principal id: `<id>.key.pem` holds the
/// PKCS#8 private key and `<id>.pub.pem` the SPKI public key.
#[derive(Debug, Clone)]
pub struct Keystore {
    dir: PathBuf,
}

impl Keystore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, PrivacyError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn private_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.key.pem"))
    }

    fn public_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.pub.pem"))
    }

    /// Generates and stores a key pair for `id`, replacing any existing one.
    pub fn generate(&self, id: &str) -> Result<PrivateKey, PrivacyError> {
        let key = PrivateKey::generate();
        fs::write(self.private_path(id), key.to_pem())?;
        fs::write(self.public_path(id), key.public_key().to_pem())?;
        Ok(key)
    }

    pub fn load_or_generate(&self, id: &str) -> Result<PrivateKey, PrivacyError> {
        match self.private(id) {
            Ok(k) => Ok(k),
            Err(PrivacyError::UnknownPrincipal(_)) => self.generate(id),
            Err(e) => Err(e),
        }
    }

    pub fn register_public(&self, id: &str, key: &PublicKey) -> Result<(), PrivacyError> {
        fs::write(self.public_path(id), key.to_pem())?;
        Ok(())
    }

    pub fn private(&self, id: &str) -> Result<PrivateKey, PrivacyError> {
        let pem = fs::read_to_string(self.private_path(id))
            .map_err(|_| PrivacyError::UnknownPrincipal(id.to_string()))?;
        PrivateKey::from_pem(&pem)
    }

    pub fn public(&self, id: &str) -> Result<PublicKey, PrivacyError> {
        let pem = fs::read_to_string(self.public_path(id))
            .map_err(|_| PrivacyError::UnknownPrincipal(id.to_string()))?;
        PublicKey::from_pem(&pem)
    }
}
