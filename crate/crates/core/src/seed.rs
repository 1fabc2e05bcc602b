//! Fixed 64-bit mixing used to derive every generator seed in the crate.
//!
//! `mix(seed, value) = splitmix64(seed ^ splitmix64(value))`, where
//! `splitmix64` is the standard SplitMix64 output function (increment
//! `0x9E3779B97F4A7C15`, multipliers `0xBF58476D1CE4E5B9` and
//! `0x94D049BB133111EB`). Strings are folded in with 64-bit FNV-1a.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn mix(seed: u64, value: u64) -> u64 {
    splitmix64(seed ^ splitmix64(value))
}

pub const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv1a64_extend(FNV_OFFSET, bytes)
}

/// Continues an FNV-1a hash with more bytes.
pub fn fnv1a64_extend(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Seed for the split with index `split_index`.
pub fn split_seed(seed: u64, split_index: u64) -> u64 {
    mix(seed, split_index)
}

/// Seed for one run: `mix(mix(seed, split_id), fnv1a64(fingerprint))`.
pub fn run_seed(seed: u64, split_id: u64, fingerprint: &str) -> u64 {
    mix(mix(seed, split_id), fnv1a64(fingerprint.as_bytes()))
}
