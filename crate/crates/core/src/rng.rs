//! Counter-keyed random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream whose key is a
//! pure function of `(base_seed, replicate, site tag)`. Streams therefore do
//! not depend on thread scheduling or on how many other streams were drawn.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit tag for a site name (FNV-1a).
pub fn site_tag(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Derived seed for replicate `replicate` at site `tag`.
///
/// `derive_seed(b, r, t) = mix64(mix64(mix64(b) ^ (r+1)·φ) ^ t)` with φ the
/// 64-bit golden ratio constant.
pub fn derive_seed(base_seed: u64, replicate: u64, tag: u64) -> u64 {
    let a = mix64(base_seed);
    let b = mix64(a ^ replicate.wrapping_add(1).wrapping_mul(GOLDEN));
    mix64(b ^ tag)
}

pub fn stream(base_seed: u64, replicate: u64, tag: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(base_seed, replicate, tag))
}

pub fn stream_for(base_seed: u64, replicate: u64, site: &str) -> StreamRng {
    stream(base_seed, replicate, site_tag(site))
}
