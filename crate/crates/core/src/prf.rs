//! Stateless keyed mixing used wherever a value must be reproducible from
//! `(seed, index)` alone, independent of how a run is chunked.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
pub(crate) fn keyed(key: u64, index: u64) -> u64 {
    mix64(key ^ mix64(index.wrapping_mul(GOLDEN).wrapping_add(GOLDEN)))
}

/// Derives an independent stream key from a seed and a list of tags.
pub(crate) fn derive(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(mix64(seed ^ 0x5151_A0A0_C3C3_3C3C), |acc, &t| keyed(acc, t))
}
