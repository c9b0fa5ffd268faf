//! Shared helpers for tests that spawn real worker processes.

#![allow(dead_code)]

use picluster::harness::loopback::{
    spawn_loopback_cluster_with, LoopbackCluster, LoopbackError, LoopbackOptions, WorkerCommand,
};

/// Launch command for the worker subcommand of the built binary.
pub fn worker_command() -> WorkerCommand {
    WorkerCommand::new(env!("CARGO_BIN_EXE_picluster"), ["worker".to_string()])
}

/// Spawns `n` quiet loopback workers on free ports.
pub fn spawn_workers(n: usize, max_threads: usize) -> Result<LoopbackCluster, LoopbackError> {
    let options = LoopbackOptions {
        max_threads,
        quiet: true,
        ..LoopbackOptions::default()
    };
    spawn_loopback_cluster_with(&worker_command(), n, 0, &options)
}
