//! Seed layering.
//!
//! Every random stream in the lab is identified by a triple
//! `(base_seed, index, stream_tag)`. The base seed and index are mixed with
//! SplitMix64 into a ChaCha8 key, and the tag selects one of ChaCha's 2^64
//! independent streams. A trial's datasets therefore depend only on its own
//! coordinates, never on which thread ran it or how many trials came before.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tag for the labeled source sample of a trial.
pub const STREAM_SOURCE: u64 = 1;
/// Stream tag for the unlabeled target sample of a trial.
pub const STREAM_TARGET: u64 = 2;
/// Stream tag for EM restart initializations.
pub const STREAM_EM_INIT: u64 = 3;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// One SplitMix64 output step.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and an index.
///
/// `derive(base, i)` is used for sweep points (index = sweep value) and for
/// trials (index = trial number), so inserting a sweep point never moves the
/// seeds of the others.
pub fn derive(parent: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ index.wrapping_mul(GOLDEN_GAMMA).rotate_left(17))
}

/// Builds the generator for `(base, index, tag)`.
pub fn stream(base: u64, index: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(base, index));
    rng.set_stream(tag);
    rng
}
