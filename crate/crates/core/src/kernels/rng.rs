//! Seedable, stream-splittable random number generation.
//!
//! Reproducibility across machines is part of the contract: the same
//! `(base_seed, stream_id)` pair must yield the same draws on the master,
//! on any worker, and on any architecture. The generator is ChaCha8 from
//! `rand_chacha`: the key is derived from `base_seed` via
//! `SeedableRng::seed_from_u64` and `stream_id` selects the 64-bit
//! stream counter, so distinct stream ids give independent, never-
//! overlapping sequences without coordination.
//!
//! Stream ids are allocated hierarchically: worker `w` owns the block
//! starting at `w * STREAMS_PER_WORKER` and hands thread `t` the id
//! `w * STREAMS_PER_WORKER + t`. That keeps every `(base_seed,
//! stream_id)` pair in a distributed run unique as long as no worker
//! runs 2^16 or more threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream ids reserved per worker; also the stream-id stride between
/// consecutive workers.
pub const STREAMS_PER_WORKER: u64 = 1 << 16;

/// Default base seed for CLI runs that do not pass one.
pub const DEFAULT_BASE_SEED: u64 = 42;

/// Identifies one reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStreamSpec {
    pub base_seed: u64,
    pub stream_id: u64,
}

impl RngStreamSpec {
    pub fn new(base_seed: u64, stream_id: u64) -> Self {
        Self {
            base_seed,
            stream_id,
        }
    }

    /// The stream spec a given thread derives from this base.
    pub fn for_thread(&self, thread_index: usize) -> Self {
        Self {
            base_seed: self.base_seed,
            stream_id: self.stream_id + thread_index as u64,
        }
    }

    /// Instantiates the generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base_seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Draws one sample uniform on [0, 1).
    pub fn sample_iter(&self) -> impl Iterator<Item = f64> {
        let mut rng = self.rng();
        std::iter::repeat_with(move || rng.gen::<f64>())
    }
}

/// Stream-id base owned by worker `worker_index`.
pub fn worker_stream_base(worker_index: usize) -> u64 {
    worker_index as u64 * STREAMS_PER_WORKER
}
