//! Seeded random streams.
//!
//! Every random draw in the crate comes from ChaCha8 keyed by a 64-bit seed,
//! with the ChaCha stream id selecting an independent sub-stream. Per-sample
//! and per-epoch streams are therefore order-independent and identical across
//! platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Tags for deriving independent seeds from one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum SeedRole {
    GenderInit = 1,
    MaleInit = 2,
    FemaleInit = 3,
    BaselineInit = 4,
    GenderShuffle = 11,
    MaleShuffle = 12,
    FemaleShuffle = 13,
    BaselineShuffle = 14,
    Verify = 21,
}

/// SplitMix64 finalizer over `seed` and `tag`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn role_seed(seed: u64, role: SeedRole) -> u64 {
    derive_seed(seed, role as u64)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sub-stream `stream` of the generator keyed by `seed`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
