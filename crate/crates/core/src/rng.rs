//! Deterministic per-replicate random streams.
//!
//! A stream is a ChaCha8 generator keyed by `SHA-256(master_seed || scope)` and
//! positioned on stream id `replicate`. Keys differ per scope (scenario id,
//! pool name, ...), stream ids per replicate, so streams never overlap and a
//! replicate's output does not depend on which worker ran it.

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use sha2::{Digest, Sha256};

pub type Stream = ChaCha8Rng;

pub fn stream(master_seed: u64, scope: &str, replicate: u64) -> Stream {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update((scope.len() as u64).to_le_bytes());
    hasher.update(scope.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(replicate);
    rng
}
