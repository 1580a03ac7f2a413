//! Seeded random streams.
//!
//! Every stochastic routine draws a 64-bit root from the caller's generator and
//! then hands each fixed-size chunk of work its own ChaCha stream. Results are
//! reduced in chunk order, so output is bit-identical regardless of how rayon
//! schedules the chunks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Samples per parallel chunk. Changing this changes every seeded result.
pub const CHUNK: usize = 4096;

pub type StreamRng = ChaCha8Rng;

/// Generator for stream `index` under `root`.
pub fn substream(root: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(index);
    rng
}

/// Root seed for a batch of substreams, drawn from the caller's generator.
pub fn draw_root<R: Rng + ?Sized>(rng: &mut R) -> u64 {
    rng.random()
}

/// Runs `work(rng, count)` over `total` items split into [`CHUNK`]-sized pieces
/// and returns the per-chunk results in chunk order.
pub(crate) fn par_chunks<T, F>(root: u64, total: usize, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut StreamRng, usize) -> T + Sync,
{
    let chunks = total.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = CHUNK.min(total - c * CHUNK);
            let mut rng = substream(root, c as u64);
            work(&mut rng, count)
        })
        .collect()
}
