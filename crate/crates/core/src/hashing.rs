//! Content hashes for artifacts and manifests.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Git object id of a blob (SHA-256 object format): the digest of
/// `"blob {len}\0"` followed by the content.
pub fn git_blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

/// Hash of a value's canonical JSON encoding.
pub fn hash_json<T: Serialize + ?Sized>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("value serializes to JSON"))
}

/// Incremental hasher for mixed content.
#[derive(Default, Clone)]
pub struct ContentHasher(Sha256);

impl ContentHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.0.update((b.len() as u64).to_le_bytes());
        self.0.update(b);
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn u64(&mut self, x: u64) -> &mut Self {
        self.0.update(x.to_le_bytes());
        self
    }

    pub fn f64s(&mut self, xs: &[f64]) -> &mut Self {
        self.u64(xs.len() as u64);
        for x in xs {
            self.0.update(x.to_bits().to_le_bytes());
        }
        self
    }

    pub fn finish(&self) -> String {
        hex::encode(self.0.clone().finalize())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("expected a `{expected}` artifact, found `{found}`")]
    Kind { expected: String, found: String },
    #[error("unsupported `{kind}` artifact version {found} (expected {expected})")]
    Version { kind: String, found: u32, expected: u32 },
    #[error("artifact hash mismatch: stored {stored}, computed {computed}")]
    HashMismatch { stored: String, computed: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    kind: String,
    version: u32,
    hash: String,
    body: T,
}

/// Writes `body` wrapped with its kind, format version and content hash.
pub fn write_artifact<T: Serialize>(path: &Path, kind: &str, version: u32, body: &T) -> Result<String, ArtifactError> {
    let hash = hash_json(body);
    let env = Envelope { kind: kind.to_string(), version, hash: hash.clone(), body };
    std::fs::write(path, serde_json::to_string(&env)?)?;
    Ok(hash)
}

/// Reads an artifact written by [`write_artifact`], checking kind, version and hash.
pub fn read_artifact<T: Serialize + DeserializeOwned>(path: &Path, kind: &str, version: u32) -> Result<T, ArtifactError> {
    let env: Envelope<T> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if env.kind != kind {
        return Err(ArtifactError::Kind { expected: kind.to_string(), found: env.kind });
    }
    if env.version != version {
        return Err(ArtifactError::Version { kind: env.kind, found: env.version, expected: version });
    }
    let computed = hash_json(&env.body);
    if computed != env.hash {
        return Err(ArtifactError::HashMismatch { stored: env.hash, computed });
    }
    Ok(env.body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn blob_hash_matches_git() {
        // `git hash-object` in a sha256 repository.
        assert_eq!(git_blob_hash(b"abc"), "c1cf6e465077930e88dc5136641d402f72a229ddd996f627d60e9639eaba35a6");
    }

    #[test]
    fn length_prefix_separates_fields() {
        let a = ContentHasher::new().str("ab").str("c").finish();
        let b = ContentHasher::new().str("a").str("bc").finish();
        assert_ne!(a, b);
    }

    #[test]
    fn artifact_roundtrip_and_tamper() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        write_artifact(&path, "thing", 1, &vec![1.5, 2.0]).unwrap();
        let back: Vec<f64> = read_artifact(&path, "thing", 1).unwrap();
        assert_eq!(back, vec![1.5, 2.0]);
        assert!(matches!(read_artifact::<Vec<f64>>(&path, "other", 1), Err(ArtifactError::Kind { .. })));
        assert!(matches!(read_artifact::<Vec<f64>>(&path, "thing", 2), Err(ArtifactError::Version { .. })));
        let text = std::fs::read_to_string(&path).unwrap().replace("1.5", "1.25");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(read_artifact::<Vec<f64>>(&path, "thing", 1), Err(ArtifactError::HashMismatch { .. })));
    }
}
