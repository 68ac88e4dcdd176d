/// SplitMix64 finalizer applied to `(master, index)`.
///
/// Every stream of randomness that may run in parallel (trees, pairs,
/// Monte Carlo blocks) is seeded through this function so results never
/// depend on scheduling.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
