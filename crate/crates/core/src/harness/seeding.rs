use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Independent random stream per pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Topology,
    Portfolio,
    Shocks,
    Protection,
    Calibration,
}

impl Stream {
    fn label(self) -> &'static [u8] {
        match self {
            Stream::Topology => b"topology",
            Stream::Portfolio => b"portfolio",
            Stream::Shocks => b"shocks",
            Stream::Protection => b"protection",
            Stream::Calibration => b"calibration",
        }
    }
}

/// Generator keyed by SHA-256 of (master seed, sample, attempt, stream).
/// Streams of different samples never overlap, and every arm and equity
/// ratio that looks at the same (sample, attempt) sees the same draws.
pub fn stream_rng(master_seed: u64, sample_index: u64, attempt: u32, stream: Stream) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update(sample_index.to_le_bytes());
    h.update(attempt.to_le_bytes());
    h.update(stream.label());
    let seed: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(seed)
}

/// 64-bit seed derived from the master seed for whole-run tasks.
pub fn derived_seed(master_seed: u64, stream: Stream) -> u64 {
    use rand::RngCore;
    stream_rng(master_seed, u64::MAX, 0, stream).next_u64()
}
