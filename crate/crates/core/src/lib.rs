//! A miniature master/worker compute cluster and the benchmark harness
//! around it.
//!
//! The crate has three layers:
//!
//! * compute kernels — row-partitioned matrix-vector multiplication and
//!   Monte Carlo estimation of pi, in sequential and multithreaded form
//!   ([`kernels`]), on top of deterministic work partitioning
//!   ([`partition`]);
//! * a remote-execution layer — a binary wire protocol ([`protocol`]),
//!   a worker daemon that executes kernel requests ([`worker`]), and a
//!   master that fans a task out over the cluster and aggregates the
//!   results ([`master`]);
//! * measurement — an analytical transfer-time/offload model
//!   ([`costmodel`]) and a sweep harness that times task grids, computes
//!   speedups, and emits CSV ([`harness`]).
//!
//! Everything is deterministic given a seed: the same topology, sample
//! budget, and seed produce bit-identical estimates whether a task runs
//! in-process, on one worker, or across the whole cluster.

pub mod costmodel;
pub mod harness;
pub mod kernels;
pub mod master;
pub mod partition;
pub mod protocol;
pub mod types;
pub mod worker;

pub use kernels::pool::ComputePool;
pub use kernels::rng::RngStreamSpec;
pub use partition::{partition, shard_row_range, PartitionPlan};
pub use types::{ClusterTopology, DenseVector, Matrix, PiEstimate, SampleBudget, WorkerEndpoint};
