//! Stable, seedable hashing used for categorical encoding, fold assignment
//! and per-stage seed derivation. `std`'s hasher is not stable across
//! releases, so a fixed FNV-1a is used instead.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over `bytes`, with `seed` folded into the offset basis.
pub fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ splitmix64(seed);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(h)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed for a named pipeline stage from the top-level run seed.
///
/// `derive_seed(seed, "split")` feeds the fold partition and
/// `derive_seed(seed, "gbdt")` the classifier; the generator uses the
/// run seed directly.
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    fnv1a(seed, stage.as_bytes())
}

/// Maps a hash to `[0, 1)` using its top 53 bits.
pub fn unit_interval(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}
