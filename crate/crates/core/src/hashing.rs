//! SHA-256 helpers for cache keys and chunk headers.

use serde::Serialize;
use sha2::{Digest, Sha256};

pub type Hash = [u8; 32];

pub fn sha256(bytes: &[u8]) -> Hash {
    Sha256::digest(bytes).into()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(sha256(bytes))
}

/// Hash of a value's canonical JSON encoding.
pub fn hash_json<T: Serialize + ?Sized>(value: &T) -> Hash {
    sha256(&serde_json::to_vec(value).expect("serializable value"))
}

pub fn hash_json_hex<T: Serialize + ?Sized>(value: &T) -> String {
    hex::encode(hash_json(value))
}

/// Incremental hasher for sequences of floats and strings.
#[derive(Default, Clone)]
pub struct StableHasher(Sha256);

impl StableHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.0.update((s.len() as u64).to_le_bytes());
        self.0.update(s.as_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.0.update(v.to_bits().to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.0.update(v.to_le_bytes());
        self
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.0.update(b);
        self
    }

    pub fn finish(self) -> Hash {
        self.0.finalize().into()
    }
}
