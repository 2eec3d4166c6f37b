//! Moving-block resampling shared by the copula confidence intervals and the
//! attribution stability analysis.
//!
//! Every replicate draws from its own generator seeded by
//! [`derive_seed`]`(base, replicate)`, so results do not depend on the order
//! in which replicates are executed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer over `(base, stream)`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn replicate_rng(base: u64, replicate: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, replicate))
}

/// Default block length `ceil(n^(1/3))`.
pub fn default_block_length(n: usize) -> usize {
    let b = (n as f64).cbrt().ceil() as usize;
    // cbrt of a perfect cube can land one ulp above the integer
    if (b - 1).pow(3) >= n && b > 1 {
        b - 1
    } else {
        b.max(1)
    }
}

/// Draws `n` row indices by concatenating blocks of `block_length`
/// consecutive rows with uniformly chosen starts, truncated to `n`.
///
/// Caller guarantees `1 <= block_length <= n`.
pub fn moving_block_indices<R: Rng + ?Sized>(n: usize, block_length: usize, rng: &mut R) -> Vec<usize> {
    debug_assert!(block_length >= 1 && block_length <= n);
    let mut idx = Vec::with_capacity(n + block_length);
    while idx.len() < n {
        let start = rng.random_range(0..=(n - block_length));
        idx.extend(start..start + block_length);
    }
    idx.truncate(n);
    idx
}
