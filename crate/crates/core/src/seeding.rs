//! Chunk-addressed random number generators.
//!
//! Every chunk gets its own generator keyed by `(global_seed, doc_id,
//! chunk_index)`, so results do not depend on how chunks are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type ChunkRng = ChaCha8Rng;

/// Stable 64-bit seed from SHA-256 over the little-endian encoding of the key.
pub fn derive_seed(global_seed: u64, doc_id: &str, chunk_index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(global_seed.to_le_bytes());
    h.update((doc_id.len() as u64).to_le_bytes());
    h.update(doc_id.as_bytes());
    h.update((chunk_index as u64).to_le_bytes());
    let digest = h.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(first)
}

pub fn chunk_rng(global_seed: u64, doc_id: &str, chunk_index: usize) -> ChunkRng {
    ChaCha8Rng::seed_from_u64(derive_seed(global_seed, doc_id, chunk_index))
}

pub fn rng_from_seed(seed: u64) -> ChunkRng {
    ChaCha8Rng::seed_from_u64(seed)
}
