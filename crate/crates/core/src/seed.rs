//! Seed derivation for the counter-keyed random streams.
//!
//! Every stochastic quantity in a run is a pure function of a root seed, a
//! domain tag and (where relevant) a round index. Streams are ChaCha8 keyed
//! by the mixed seed, with the round index selecting the ChaCha stream id.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const TAG_THETA: u64 = 0x7468_6574_6100_0001;
pub(crate) const TAG_CONTEXT: u64 = 0x6374_7800_0000_0002;
pub(crate) const TAG_NOISE: u64 = 0x6e6f_6973_6500_0003;
pub(crate) const TAG_PROTOTYPE: u64 = 0x7072_6f74_6f00_0004;
pub(crate) const TAG_POLICY: u64 = 0x706f_6c69_6379_0005;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent seed for `tag` from a root seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ mix64(tag))
}

/// A generator for the (`seed`, `tag`) domain, positioned on stream `index`.
pub(crate) fn stream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, tag));
    rng.set_stream(index);
    rng
}
