//! Deterministic stream derivation.
//!
//! Every random draw in the crate comes from a ChaCha8 stream whose key is
//! derived from a top-level seed plus a list of tags (stream name, particle
//! index, step index, ...). Streams are independent of evaluation order, so
//! particles can be advanced concurrently without changing the output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a hash of a stream name, used as a tag.
pub fn name_tag(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives a ChaCha8 stream keyed by `(seed, tags...)`.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut state = splitmix(seed ^ GOLDEN);
    for &t in tags {
        state = splitmix(state ^ splitmix(t));
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Stream for one named substream, e.g. `named(seed, "train", &[epoch])`.
pub fn named(seed: u64, name: &str, tags: &[u64]) -> ChaCha8Rng {
    let mut all = Vec::with_capacity(tags.len() + 1);
    all.push(name_tag(name));
    all.extend_from_slice(tags);
    stream(seed, &all)
}

/// A fresh 64-bit seed for a named substream, for APIs that take a seed.
pub fn derive_seed(seed: u64, name: &str, tags: &[u64]) -> u64 {
    rand::Rng::random(&mut named(seed, name, tags))
}
