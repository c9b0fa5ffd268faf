//! Reusable compute thread pool.
//!
//! Workers keep one pool alive for their whole lifetime so per-request
//! thread creation cost is paid once, at startup. The pool is a fixed
//! set of threads (rayon underneath); kernel calls fan their shards out
//! onto it and join before returning. Submitting more shards than pool
//! threads is fine, they just queue.

use thiserror::Error;

#[derive(Debug, Error)]
#[error("failed to build compute pool: {0}")]
pub struct PoolError(String);

/// Fixed-size pool of long-lived compute threads.
pub struct ComputePool {
    inner: rayon::ThreadPool,
}

impl ComputePool {
    /// Builds a pool with `threads` worker threads (at least one).
    pub fn new(threads: usize) -> Result<Self, PoolError> {
        let inner = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .thread_name(|i| format!("compute-{i}"))
            .build()
            .map_err(|e| PoolError(e.to_string()))?;
        Ok(Self { inner })
    }

    /// Number of live worker threads.
    pub fn threads(&self) -> usize {
        self.inner.current_num_threads()
    }

    pub(crate) fn scope<'scope, F, R>(&self, f: F) -> R
    where
        F: FnOnce(&rayon::Scope<'scope>) -> R + Send,
        R: Send,
    {
        self.inner.scope(f)
    }
}

impl std::fmt::Debug for ComputePool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ComputePool")
            .field("threads", &self.threads())
            .finish()
    }
}
