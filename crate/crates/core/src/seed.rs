//! Deterministic seed derivation.
//!
//! Per-image RNG streams are derived from the global seed and a stable
//! identifier, so neither corpus order nor worker scheduling can change any
//! result. The mixers are fixed here rather than taken from `std::hash` so
//! the derivation never varies across builds.

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub(crate) fn mix(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag))
}

pub(crate) fn mix_str(seed: u64, tag: &str) -> u64 {
    mix(seed, fnv1a64(tag.as_bytes()))
}
