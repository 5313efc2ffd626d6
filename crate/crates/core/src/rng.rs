//! Seeding helpers. Every stochastic routine takes an explicit RNG; sub-streams
//! are derived from a base seed plus a path of stream identifiers so that
//! independent computations never share a generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The engine's RNG. ChaCha is portable across platforms, which keeps seeded
/// runs reproducible everywhere.
pub type EngineRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of stream ids.
pub fn derive_seed(base: u64, stream: &[u64]) -> u64 {
    stream
        .iter()
        .fold(splitmix64(base), |acc, &s| splitmix64(acc ^ splitmix64(s)))
}

/// Stable 64-bit hash of a string (FNV-1a), used to turn session ids into streams.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn rng_from(base: u64, stream: &[u64]) -> EngineRng {
    EngineRng::seed_from_u64(derive_seed(base, stream))
}
