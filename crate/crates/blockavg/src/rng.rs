//! Deterministic stream-split randomness.
//!
//! Every random draw in the crate comes from a ChaCha stream keyed by
//! `(master seed, replica, purpose)`. ChaCha is a counter-mode cipher, so
//! streams with different keys are statistically independent and a replica
//! can be replayed exactly regardless of how work is scheduled across
//! threads. Samplers with different purposes (block sizes, subset draws,
//! chunk probes, fragment choices) never share a stream, so adding draws to
//! one purpose does not perturb the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. The discriminant is part of the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    /// Block-size draws in the engine.
    BlockSizes = 0,
    /// Uniform subset draws (the sites of each block).
    BlockSites = 1,
    /// Marked-chunk probes (fragment and relocation choices).
    Chunks = 2,
    /// Fragment permutations in literal pile tracking.
    Fragments = 3,
}

/// Number of distinct purposes; replica indices must stay below `2^56`.
const PURPOSE_BITS: u32 = 8;

/// An RNG for the given `(master_seed, replica, purpose)` triple.
pub fn stream_rng(master_seed: u64, replica: u64, purpose: StreamPurpose) -> ChaCha8Rng {
    assert!(
        replica < (1 << (64 - PURPOSE_BITS)),
        "replica index {replica} out of range"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((replica << PURPOSE_BITS) | purpose as u64);
    rng
}
