//! Portable random streams.
//!
//! Every stochastic routine draws from ChaCha8 (the `rand_chacha` reference
//! implementation). A stream is addressed by `(seed, stream, substream)`: the
//! 64-bit seed is expanded with `seed_from_u64`, the stream id selects the
//! ChaCha stream and the substream is folded into the key with a SplitMix64
//! step. Distinct addresses give independent sequences, so chains, replicates
//! and predictive cells can be generated in any order or in parallel with
//! identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    substream_rng(seed, stream, 0)
}

/// Generator for `(seed, stream, substream)`.
pub fn substream_rng(seed: u64, stream: u64, substream: u64) -> StreamRng {
    let key = if substream == 0 {
        seed
    } else {
        seed ^ splitmix64(substream)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(stream);
    rng
}

/// Derive a child seed, used for nesting (e.g. replicate -> chain seeds).
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    splitmix64(seed ^ splitmix64(label.wrapping_add(1)))
}
