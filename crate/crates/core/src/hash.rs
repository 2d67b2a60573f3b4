use core::hash::Hasher;

use fnv::FnvHasher;

/// Stable 64-bit fingerprint of a byte stream; used to key stub behaviour on
/// request content so stubs stay pure functions of their inputs.
pub(crate) fn fingerprint<I: IntoIterator<Item = u64>>(words: I) -> u64 {
    let mut h = FnvHasher::default();
    for w in words {
        h.write_u64(w);
    }
    h.finish()
}

pub(crate) fn fingerprint_str(s: &str, seed: u64) -> u64 {
    let mut h = FnvHasher::default();
    h.write(s.as_bytes());
    h.write_u64(seed);
    h.finish()
}

pub(crate) fn fingerprint_f64(values: &[f64]) -> u64 {
    fingerprint(values.iter().map(|v| v.to_bits()))
}

/// SplitMix64 finalizer, used to derive independent sub-seeds.
pub(crate) fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
