//! Benchmark harness: timed sweeps over task grids, speedup
//! computation, and CSV emission.
//!
//! A sweep walks a (workers x threads) grid for one task. Every grid
//! cell is executed `runs` times around a monotonic clock and reported
//! as the arithmetic mean. The baseline cell, single-thread local
//! execution of the same task, always runs first; speedup is baseline
//! time over cell time, so the baseline's own speedup is exactly 1.
//! Remote cells reuse connections opened once at sweep start, so
//! connection establishment is excluded from timings while marshaling
//! and transfer are included. Cells run strictly one at a time; nothing
//! else is measured concurrently.

pub mod loopback;

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use thiserror::Error;

use crate::kernels::pool::ComputePool;
use crate::kernels::rng::RngStreamSpec;
use crate::kernels::{matvec_parallel, mc_pi_parallel};
use crate::master::{pi_local, Cluster};
use crate::types::{ClusterTopology, DenseVector, Matrix, SampleBudget};

/// Task selector for a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    /// Matrix-vector multiply in-process, threads axis only.
    MatvecLocal,
    /// Pi estimate in-process, threads axis only.
    PiLocal,
    /// Pi estimate on exactly one remote worker, threads axis only.
    PiRemoteSingle,
    /// Pi estimate over a workers x threads grid.
    PiDistributed,
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::MatvecLocal => "matvec-local",
            TaskKind::PiLocal => "pi-local",
            TaskKind::PiRemoteSingle => "pi-remote-single",
            TaskKind::PiDistributed => "pi-distributed",
        }
    }

    pub fn is_remote(&self) -> bool {
        matches!(self, TaskKind::PiRemoteSingle | TaskKind::PiDistributed)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "matvec-local" => Ok(TaskKind::MatvecLocal),
            "pi-local" => Ok(TaskKind::PiLocal),
            "pi-remote-single" => Ok(TaskKind::PiRemoteSingle),
            "pi-distributed" => Ok(TaskKind::PiDistributed),
            other => Err(format!(
                "unknown task {other:?}; expected matvec-local, pi-local, \
                 pi-remote-single, or pi-distributed"
            )),
        }
    }
}

/// One sweep: which task, which grid, how many timed runs per cell, and
/// the task size.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub task: TaskKind,
    pub workers: RangeInclusive<u32>,
    pub threads: RangeInclusive<u32>,
    /// Timed executions per grid cell; their arithmetic mean is
    /// reported.
    pub runs: u32,
    /// Sample budget for the pi tasks.
    pub samples: u64,
    /// Matrix size for the matvec task.
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    /// Run one extra untimed execution per cell before timing.
    pub discard_first: bool,
}

impl SweepSpec {
    pub fn new(task: TaskKind) -> Self {
        Self {
            task,
            workers: 1..=1,
            threads: 1..=4,
            runs: 10,
            samples: 1_000_000,
            rows: 1000,
            cols: 1000,
            seed: crate::kernels::rng::DEFAULT_BASE_SEED,
            discard_first: false,
        }
    }

    fn validate(&self) -> Result<(), SweepError> {
        if self.runs == 0 {
            return Err(SweepError::InvalidSpec("runs must be at least 1".into()));
        }
        if self.threads.is_empty() || *self.threads.start() == 0 {
            return Err(SweepError::InvalidSpec(
                "thread range must be non-empty and start at 1 or more".into(),
            ));
        }
        if self.task == TaskKind::PiDistributed
            && (self.workers.is_empty() || *self.workers.start() == 0)
        {
            return Err(SweepError::InvalidSpec(
                "worker range must be non-empty and start at 1 or more".into(),
            ));
        }
        match self.task {
            TaskKind::MatvecLocal => {
                if self.rows == 0 || self.cols == 0 {
                    return Err(SweepError::InvalidSpec(
                        "matrix dimensions must be at least 1x1".into(),
                    ));
                }
            }
            _ => {
                if self.samples == 0 {
                    return Err(SweepError::InvalidSpec(
                        "sample budget must be at least 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// One averaged grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRecord {
    pub task: TaskKind,
    /// 0 for local execution.
    pub workers: u32,
    pub threads_per_worker: u32,
    pub total_threads: u32,
    pub mean_seconds: f64,
    pub baseline_seconds: f64,
    pub speedup: f64,
}

impl BenchmarkRecord {
    fn new(
        task: TaskKind,
        workers: u32,
        threads_per_worker: u32,
        mean_seconds: f64,
        baseline_seconds: f64,
    ) -> Self {
        Self {
            task,
            workers,
            threads_per_worker,
            total_threads: workers.max(1) * threads_per_worker,
            mean_seconds,
            baseline_seconds,
            speedup: speedup(baseline_seconds, mean_seconds),
        }
    }
}

/// Sequential-baseline time over parallel time.
pub fn speedup(baseline_seconds: f64, mean_seconds: f64) -> f64 {
    baseline_seconds / mean_seconds
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep: {0}")]
    InvalidSpec(String),
    #[error("sweep needs {needed} workers but the topology provides {available}")]
    TooFewWorkers { needed: usize, available: usize },
    #[error("sweep incomplete after {} of {expected} cells: {cause}", records.len())]
    Incomplete {
        records: Vec<BenchmarkRecord>,
        expected: usize,
        cause: String,
    },
}

/// Executes the sweep and returns one record per grid cell, ordered by
/// (task, workers, threads).
///
/// On a worker failure the sweep aborts; the error carries the records
/// completed so far, flagged incomplete.
pub fn run_sweep(
    spec: &SweepSpec,
    topology: &ClusterTopology,
) -> Result<Vec<BenchmarkRecord>, SweepError> {
    spec.validate()?;
    let mut records = match spec.task {
        TaskKind::MatvecLocal => run_matvec_local(spec)?,
        TaskKind::PiLocal => run_pi_local(spec)?,
        TaskKind::PiRemoteSingle | TaskKind::PiDistributed => run_pi_remote(spec, topology)?,
    };
    records.sort_by(|a, b| {
        (a.task.name(), a.workers, a.threads_per_worker)
            .cmp(&(b.task.name(), b.workers, b.threads_per_worker))
    });
    Ok(records)
}

fn thread_values(spec: &SweepSpec) -> Vec<u32> {
    spec.threads.clone().collect()
}

/// Times one cell: optional untimed warm run, then `runs` timed runs,
/// arithmetic mean.
fn time_cell<E: fmt::Display>(
    spec: &SweepSpec,
    mut call: impl FnMut() -> Result<(), E>,
) -> Result<f64, String> {
    if spec.discard_first {
        call().map_err(|e| e.to_string())?;
    }
    let mut total = 0.0;
    for _ in 0..spec.runs {
        let start = Instant::now();
        call().map_err(|e| e.to_string())?;
        total += start.elapsed().as_secs_f64();
    }
    Ok(total / spec.runs as f64)
}

fn run_matvec_local(spec: &SweepSpec) -> Result<Vec<BenchmarkRecord>, SweepError> {
    let threads = thread_values(spec);
    let pool = pool_for(&threads)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(spec.seed);
    let m = Matrix::random(spec.rows, spec.cols, &mut rng)
        .map_err(|e| SweepError::InvalidSpec(e.to_string()))?;
    let v = DenseVector::random(spec.cols, &mut rng)
        .map_err(|e| SweepError::InvalidSpec(e.to_string()))?;

    let cell = |k: u32| {
        time_cell(spec, || matvec_parallel(&pool, &m, &v, k as usize).map(|_| ()))
    };
    local_grid(spec, threads, cell)
}

fn run_pi_local(spec: &SweepSpec) -> Result<Vec<BenchmarkRecord>, SweepError> {
    let threads = thread_values(spec);
    let pool = pool_for(&threads)?;
    let stream = RngStreamSpec::new(spec.seed, 0);

    let cell = |k: u32| {
        time_cell(spec, || {
            mc_pi_parallel(&pool, spec.samples, k as usize, stream).map(|_| ())
        })
    };
    local_grid(spec, threads, cell)
}

/// Shared shape of the two local sweeps: baseline (one thread) first,
/// then the thread axis, reusing the baseline measurement for the
/// one-thread cell so its speedup is exactly 1.
fn local_grid(
    spec: &SweepSpec,
    threads: Vec<u32>,
    mut cell: impl FnMut(u32) -> Result<f64, String>,
) -> Result<Vec<BenchmarkRecord>, SweepError> {
    let expected = threads.len();
    let incomplete = |records: Vec<BenchmarkRecord>, cause: String| SweepError::Incomplete {
        records,
        expected,
        cause,
    };

    let baseline = cell(1).map_err(|cause| incomplete(Vec::new(), cause))?;
    let mut records = Vec::with_capacity(expected);
    for &k in &threads {
        let mean = if k == 1 {
            baseline
        } else {
            match cell(k) {
                Ok(mean) => mean,
                Err(cause) => return Err(incomplete(records, cause)),
            }
        };
        records.push(BenchmarkRecord::new(spec.task, 0, k, mean, baseline));
    }
    Ok(records)
}

fn run_pi_remote(
    spec: &SweepSpec,
    topology: &ClusterTopology,
) -> Result<Vec<BenchmarkRecord>, SweepError> {
    let worker_values: Vec<u32> = match spec.task {
        TaskKind::PiRemoteSingle => vec![1],
        _ => spec.workers.clone().collect(),
    };
    let threads = thread_values(spec);
    let max_workers = *worker_values.iter().max().expect("non-empty") as usize;
    if topology.workers().len() < max_workers {
        return Err(SweepError::TooFewWorkers {
            needed: max_workers,
            available: topology.workers().len(),
        });
    }
    let expected = worker_values.len() * threads.len();
    let incomplete = |records: Vec<BenchmarkRecord>, cause: String| SweepError::Incomplete {
        records,
        expected,
        cause,
    };

    // One connection per worker for the whole sweep; timing below only
    // covers the calls themselves.
    let mut cluster = Cluster::connect(topology)
        .map_err(|e| incomplete(Vec::new(), e.to_string()))?;
    let budget = SampleBudget::new(spec.samples, spec.seed);

    // Local single-thread baseline, run before any grid cell. Not a
    // grid cell itself, so it is not emitted as a record.
    let pool = ComputePool::new(1).map_err(|e| SweepError::InvalidSpec(e.to_string()))?;
    let baseline = time_cell(spec, || pi_local(&pool, &budget, 1).map(|_| ()))
        .map_err(|cause| incomplete(Vec::new(), cause))?;

    let mut records = Vec::with_capacity(expected);
    for &w in &worker_values {
        for &k in &threads {
            let mean = match time_cell(spec, || {
                cluster.pi_on_first(w as usize, &budget, k).map(|_| ())
            }) {
                Ok(mean) => mean,
                Err(cause) => return Err(incomplete(records, cause)),
            };
            records.push(BenchmarkRecord::new(spec.task, w, k, mean, baseline));
        }
    }
    Ok(records)
}

fn pool_for(threads: &[u32]) -> Result<ComputePool, SweepError> {
    let max = threads.iter().copied().max().unwrap_or(1) as usize;
    ComputePool::new(max).map_err(|e| SweepError::InvalidSpec(e.to_string()))
}

/// Formats a float with six significant digits.
fn sig6(x: f64) -> String {
    format!("{x:.5e}")
}

/// Renders records as CSV: fixed header, one row per record, floats at
/// six significant digits, rows ordered by (task, workers, threads).
/// Identical inputs produce byte-identical output.
pub fn emit_csv(records: &[BenchmarkRecord]) -> String {
    let mut rows: Vec<&BenchmarkRecord> = records.iter().collect();
    rows.sort_by(|a, b| {
        (a.task.name(), a.workers, a.threads_per_worker)
            .cmp(&(b.task.name(), b.workers, b.threads_per_worker))
    });
    let mut out =
        String::from("task,workers,threads_per_worker,total_threads,mean_seconds,baseline_seconds,speedup\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.task,
            r.workers,
            r.threads_per_worker,
            r.total_threads,
            sig6(r.mean_seconds),
            sig6(r.baseline_seconds),
            sig6(r.speedup),
        ));
    }
    out
}

/// Advisory line printed after sweeps: saturating every core of a
/// worker leaves no headroom for OS-level processes and typically
/// flattens speedup, so the sweet spot is one thread fewer.
pub fn concurrency_guidance(cores_per_worker: usize) -> String {
    let sweet_spot = cores_per_worker.saturating_sub(1).max(1);
    format!(
        "guidance: with {cores_per_worker} cores per worker, capping compute at \
         {sweet_spot} threads per worker leaves a core for OS-level processes; \
         using all {cores_per_worker} typically adds little and can degrade scaling"
    )
}
