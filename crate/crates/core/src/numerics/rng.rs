//! Seeded random streams.
//!
//! Every random draw in the crate comes from a [`Xoshiro256PlusPlus`]
//! generator whose seed is derived from a single root seed:
//!
//! ```text
//! child = splitmix(splitmix(root ^ fnv1a64(label)) ^ index)
//! rng   = Xoshiro256PlusPlus::seed_from_u64(child)
//! ```
//!
//! where `splitmix` is the SplitMix64 output finalizer and `fnv1a64` the
//! 64-bit FNV-1a hash of the UTF-8 label. `seed_from_u64` itself expands the
//! child seed with SplitMix64. Uniform `f64` values in `[0, 1)` are the top 53
//! bits of `next_u64` scaled by `2^-53`.

use rand::{RngCore, SeedableRng};
pub use rand_xoshiro::Xoshiro256PlusPlus;

pub type StreamRng = Xoshiro256PlusPlus;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ *b as u64).wrapping_mul(FNV_PRIME))
}

/// SplitMix64 finalizer.
pub fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, label: &str, index: u64) -> u64 {
    splitmix(splitmix(root ^ fnv1a64(label.as_bytes())) ^ index)
}

/// Independent stream for `(root, label, index)`.
pub fn stream(root: u64, label: &str, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(root, label, index))
}

/// Uniform draw in `[0, 1)` with 53 bits of precision.
pub fn unit_f64<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform index in `0..n` by multiply-shift; bias is below `n / 2^64`.
pub fn index<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> usize {
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

/// Fisher–Yates shuffle driven by [`index`].
pub fn shuffle<T, R: RngCore + ?Sized>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = index(rng, i + 1);
        items.swap(i, j);
    }
}
