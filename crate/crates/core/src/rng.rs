//! Counter-based seeding.
//!
//! Every random stream in the crate is a ChaCha8 generator keyed by a 64-bit
//! seed and addressed by a 64-bit stream index. Distinct stream indices under
//! one seed never overlap, so parallel jobs stay reproducible regardless of
//! thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream index for chunk `chunk` of job `job`.
pub fn job_stream(job: u32, chunk: u32) -> u64 {
    ((job as u64) << 32) | chunk as u64
}

/// Seed for item `index` of a batch run under `seed` (SplitMix64 finalizer),
/// so per-item generators do not collide across neighbouring seeds.
pub fn item_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
