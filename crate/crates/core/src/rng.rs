//! Deterministic seed derivation for independent RNG streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named stream families. Each occupies a disjoint range of derived seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    TrainFrames = 1,
    ValidationFrames = 2,
    EvalFrames = 3,
    Init = 4,
    Shuffle = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `(seed, stream, index)` into a 64-bit seed. The top byte carries the
/// stream tag so that seeds from different families can never coincide.
pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    let mixed = splitmix64(splitmix64(seed ^ splitmix64(index)) ^ (stream as u64));
    (mixed & 0x00FF_FFFF_FFFF_FFFF) | ((stream as u64) << 56)
}

/// Recovers the stream tag from a derived seed.
pub fn stream_of(derived: u64) -> u64 {
    derived >> 56
}

pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, index))
}
