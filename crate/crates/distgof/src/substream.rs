//! Reproducible random substreams.
//!
//! Every randomized routine in this crate draws from a ChaCha stream that is
//! derived from a 64-bit master seed and a stream index. Replications and
//! study repetitions own disjoint streams, so results are bit-identical
//! whether the work runs serially or in parallel, and independent of
//! scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes a master seed and an index into a new 64-bit seed (splitmix64
/// finalizer). Used to hand independent master seeds to nested layers, e.g.
/// one per study repetition.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Returns the ChaCha stream `stream` of the generator keyed by `master`.
/// Streams with distinct indices never overlap.
pub fn substream(master: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}
