//! Counter-based random streams and the deterministic replicate scheduler.
//!
//! Every replicate (or replicate pair) owns a ChaCha stream derived from
//! `(seed, domain, index)`. Work is cut into fixed-size blocks whose results
//! are merged in block order, so estimates do not depend on the number of
//! workers.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Replicates per scheduling block. Fixed so merge order never changes.
pub const BLOCK_SIZE: u64 = 2048;

/// Independent stream families. Components that must stay independent
/// (e.g. claims and the Gaussian perturbation) draw from different domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamDomain {
    Gaussian,
    Levy,
    Constants,
    Auxiliary,
}

impl StreamDomain {
    fn tag(self) -> u64 {
        match self {
            StreamDomain::Gaussian => 0x9e37_79b9_7f4a_7c15,
            StreamDomain::Levy => 0xbf58_476d_1ce4_e5b9,
            StreamDomain::Constants => 0x94d0_49bb_1331_11eb,
            StreamDomain::Auxiliary => 0x2545_f491_4f6c_dd1d,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The generator for replicate `index` of `domain` under `seed`.
pub fn stream(seed: u64, domain: StreamDomain, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = seed ^ domain.tag();
    for chunk in key.chunks_mut(8) {
        state = splitmix(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Runs `work` over `[0, n)` in blocks of [`BLOCK_SIZE`] on `workers`
/// threads and returns the per-block results in block order.
pub fn run_blocks<A, F>(n: u64, workers: usize, work: F) -> Vec<A>
where
    A: Send,
    F: Fn(Range<u64>) -> A + Sync + Send,
{
    let blocks: Vec<Range<u64>> = (0..n.div_ceil(BLOCK_SIZE))
        .map(|b| b * BLOCK_SIZE..((b + 1) * BLOCK_SIZE).min(n))
        .collect();
    if workers <= 1 || blocks.len() <= 1 {
        return blocks.into_iter().map(&work).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| blocks.into_par_iter().map(&work).collect()),
        Err(_) => blocks.into_iter().map(&work).collect(),
    }
}
