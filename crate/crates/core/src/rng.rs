//! Seed derivation for independent, reproducible random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags so that different consumers of one base seed never overlap.
#[derive(Clone, Copy, Debug)]
#[repr(u64)]
pub enum Stream {
    Chain = 1,
    Prediction = 2,
    Field = 3,
    Truth = 4,
    Survey = 5,
    Fold = 6,
    Monitor = 7,
    Grid = 8,
}

/// SplitMix64 finaliser.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed, a stream tag and an index.
pub fn derive(seed: u64, stream: Stream, index: u64) -> u64 {
    mix(mix(seed ^ mix(stream as u64)).wrapping_add(index))
}

pub fn rng_for(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, stream, index))
}
