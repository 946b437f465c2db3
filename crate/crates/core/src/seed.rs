//! Deterministic derivation of independent RNG seeds from a master seed.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 output for state `x`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for sub-stream `stream` of `base`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream.wrapping_mul(GOLDEN)))
}

/// Seed for a path of nested sub-streams, e.g. `[dataset, design, purpose]`.
pub fn derive_path(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(base, |s, &p| derive_seed(s, p))
}
