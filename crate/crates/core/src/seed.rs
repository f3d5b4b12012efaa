//! Derivation of independent per-stage and per-worker seeds from one global seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `salt` into `seed`. Distinct salts give statistically independent streams.
pub fn mix(seed: u64, salt: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ salt.rotate_left(17) ^ 0xD6E8_FEB8_6659_FD93)
}

/// Mixes a textual stage name into `seed`.
pub fn mix_str(seed: u64, stage: &str) -> u64 {
    // FNV-1a keeps the mapping stable across platforms and releases.
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in stage.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01B3);
    }
    mix(seed, h)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
