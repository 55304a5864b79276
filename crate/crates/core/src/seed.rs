//! Deterministic seed derivation.
//!
//! Every randomized routine in this crate draws from a generator seeded
//! through [`derive_seed`], never from global state. Pairwise computations
//! seed each (i, j) pair from the pair indices and the global seed, so results
//! are independent of scheduling order.

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed and two stream indices.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(base ^ splitmix64(a)) ^ splitmix64(b.wrapping_add(0x51_7c_c1_b7)))
}
