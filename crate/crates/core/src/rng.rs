//! Seeded random streams. Every consumer derives its own stream from a root
//! seed and a tag, so results never depend on global draw order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// 64-bit FNV-1a over the bytes of `s`.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combine a root seed with a tag into a child seed.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    splitmix(seed ^ splitmix(hash_str(tag)))
}

pub fn derive_seed_n(seed: u64, tag: &str, n: u64) -> u64 {
    splitmix(derive_seed(seed, tag) ^ splitmix(n.wrapping_add(1)))
}

pub fn stream(seed: u64, tag: &str) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, tag))
}

pub fn stream_n(seed: u64, tag: &str, n: u64) -> Rng {
    Rng::seed_from_u64(derive_seed_n(seed, tag, n))
}
