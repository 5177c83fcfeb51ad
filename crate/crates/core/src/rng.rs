//! Seeded random streams.
//!
//! Every pipeline stage draws from its own ChaCha stream derived from the
//! user seed, an operation tag and an index (segment, channel, ...), so
//! stages are reproducible independently of each other and of thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn tag_hash(tag: &str) -> u64 {
    // FNV-1a
    tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3))
}

pub fn derive_rng(seed: u64, tag: &str, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(splitmix64(seed ^ splitmix64(tag_hash(tag))));
    rng.set_stream(index);
    rng
}
