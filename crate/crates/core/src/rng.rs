//! Seeded random streams.
//!
//! Every consumer of randomness asks for a stream by a purpose label. The
//! stream seed is a hash of `(seed, label)`, so adding a new consumer never
//! shifts the draws seen by existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// 64-bit stream seed derived from a root seed and a purpose label.
pub fn stream_seed(seed: u64, label: &str) -> u64 {
    splitmix64(seed ^ splitmix64(fnv1a(label.as_bytes())))
}

/// Independent generator for `label` under root `seed`.
pub fn stream(seed: u64, label: &str) -> StreamRng {
    StreamRng::seed_from_u64(stream_seed(seed, label))
}

/// Generator for the `index`-th member of a family of streams, e.g. one per
/// repeat of an experiment. Parallel and serial runs see the same draws.
pub fn indexed_stream(seed: u64, label: &str, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(splitmix64(stream_seed(seed, label) ^ splitmix64(index)))
}
