use sha2::{Digest, Sha256};

use crate::evaluation::repeat_seed;

/// Seed of a named pipeline stage: the first 8 bytes (little-endian) of
/// `SHA-256(master_seed_le ‖ stage)`. Stages never share random streams.
pub fn stage_seed(master: u64, stage: &str) -> u64 {
    let digest = Sha256::new()
        .chain_update(master.to_le_bytes())
        .chain_update(stage.as_bytes())
        .finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Seed of one sample's work inside a stage; independent of scheduling.
pub fn sample_seed(stage_seed: u64, sample_id: u64) -> u64 {
    repeat_seed(stage_seed, sample_id as usize)
}
