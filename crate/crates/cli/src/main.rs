//! `picluster` command line: worker daemon, one-shot distributed runs,
//! offload advice, and benchmark sweeps.

use std::io::Write;
use std::ops::RangeInclusive;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;

use picluster::costmodel::advise_offload_with_latency;
use picluster::harness::loopback::{
    spawn_loopback_cluster_with, LoopbackCluster, LoopbackOptions, WorkerCommand,
};
use picluster::harness::{
    concurrency_guidance, emit_csv, run_sweep, BenchmarkRecord, SweepError, SweepSpec, TaskKind,
};
use picluster::kernels::matvec_sequential;
use picluster::kernels::rng::DEFAULT_BASE_SEED;
use picluster::master::Cluster;
use picluster::worker::{serve, WorkerConfig};
use picluster::{ClusterTopology, DenseVector, Matrix, SampleBudget};

#[derive(Parser)]
#[command(
    name = "picluster",
    version,
    about = "Master/worker compute mini-cluster: distributed matrix-vector \
             products, Monte Carlo pi estimation, offload advice, and \
             speedup benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a worker daemon in the foreground.
    Worker(WorkerArgs),
    /// Execute one distributed task across a cluster.
    #[command(subcommand)]
    Run(RunTask),
    /// Ask the transfer-time model whether offloading a task pays off.
    Advise(AdviseArgs),
    /// Run a timed sweep over a task grid and emit CSV.
    Bench(BenchArgs),
}

#[derive(Args)]
struct WorkerArgs {
    /// host:port to listen on; port 0 picks a free port (announced as
    /// `listening on HOST:PORT` on stdout).
    #[arg(long)]
    listen: String,
    /// Maximum compute threads used for a single request; higher
    /// requested counts are clamped.
    #[arg(long, default_value_t = 4)]
    max_threads: usize,
    /// Thread count for the startup warm-up pass.
    #[arg(long, default_value_t = 4)]
    warmup_threads: usize,
}

#[derive(Subcommand)]
enum RunTask {
    /// Monte Carlo pi estimate distributed over the cluster.
    Pi(RunPiArgs),
    /// Matrix-vector product with rows distributed over the cluster.
    Matvec(RunMatvecArgs),
}

#[derive(Args)]
struct RunPiArgs {
    /// Topology file: one `name host:port` line per worker.
    #[arg(long)]
    topology: PathBuf,
    /// Total number of Monte Carlo samples.
    #[arg(long)]
    samples: u64,
    /// Threads each worker uses for its share.
    #[arg(long, default_value_t = 4)]
    threads_per_worker: u32,
    #[arg(long, default_value_t = DEFAULT_BASE_SEED)]
    seed: u64,
}

#[derive(Args)]
struct RunMatvecArgs {
    /// Topology file: one `name host:port` line per worker.
    #[arg(long)]
    topology: PathBuf,
    /// Matrix rows (the distributed axis).
    #[arg(long)]
    rows: usize,
    /// Matrix columns.
    #[arg(long)]
    cols: usize,
    /// Accepted for symmetry with `run pi`; matrix shards carry no
    /// thread count on the wire, so each worker computes with its own
    /// configured --max-threads.
    #[arg(long, default_value_t = 4)]
    threads_per_worker: u32,
    /// Seed for the randomly generated matrix and vector.
    #[arg(long, default_value_t = DEFAULT_BASE_SEED)]
    seed: u64,
}

#[derive(Args)]
struct AdviseArgs {
    /// Task payload in bits (application data, no framing).
    #[arg(long)]
    bits: u64,
    /// Link bandwidth in bits per second.
    #[arg(long)]
    bandwidth_bps: f64,
    /// Measured local execution time in seconds.
    #[arg(long)]
    local_seconds: f64,
    /// Idealized remote speedup factor (e.g. workers x threads).
    #[arg(long)]
    speedup: f64,
    /// Constant per-call latency added to the remote path.
    #[arg(long, default_value_t = 0.0)]
    latency_seconds: f64,
}

#[derive(Args)]
struct BenchArgs {
    /// matvec-local | pi-local | pi-remote-single | pi-distributed
    #[arg(long)]
    task: TaskKind,
    /// Worker counts to sweep, as `A..B` (inclusive) or a single count.
    #[arg(long, default_value = "1")]
    workers: String,
    /// Threads-per-worker counts to sweep, as `A..B` or a single count.
    #[arg(long, default_value = "1..4")]
    threads: String,
    /// Timed runs per grid cell (the mean is reported).
    #[arg(long, default_value_t = 10)]
    runs: u32,
    /// Sample budget for the pi tasks.
    #[arg(long)]
    samples: Option<u64>,
    /// Matrix rows for the matvec task.
    #[arg(long)]
    rows: Option<usize>,
    /// Matrix columns for the matvec task.
    #[arg(long)]
    cols: Option<usize>,
    /// Topology file naming the remote workers.
    #[arg(long, conflicts_with = "loopback")]
    topology: Option<PathBuf>,
    /// Spawn this many loopback workers on 127.0.0.1 for the sweep.
    #[arg(long)]
    loopback: Option<usize>,
    /// First port for loopback workers; 0 picks free ports.
    #[arg(long, default_value_t = 0)]
    base_port: u16,
    /// --max-threads passed to spawned loopback workers.
    #[arg(long, default_value_t = 4)]
    loopback_max_threads: usize,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BASE_SEED)]
    seed: u64,
    /// Run one untimed execution per cell before the timed runs.
    #[arg(long)]
    discard_first: bool,
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Worker(args) => cmd_worker(args),
        Command::Run(RunTask::Pi(args)) => cmd_run_pi(args),
        Command::Run(RunTask::Matvec(args)) => cmd_run_matvec(args),
        Command::Advise(args) => cmd_advise(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

fn cmd_worker(args: WorkerArgs) -> anyhow::Result<()> {
    let config = WorkerConfig {
        listen: args.listen,
        max_threads: args.max_threads,
        warmup_threads: args.warmup_threads,
    };
    match serve(&config) {
        Ok(never) => match never {},
        Err(e) => Err(e.into()),
    }
}

fn cmd_run_pi(args: RunPiArgs) -> anyhow::Result<()> {
    let topology = ClusterTopology::from_file(&args.topology)
        .with_context(|| format!("loading topology {}", args.topology.display()))?;
    let mut cluster = Cluster::connect(&topology)?;
    let budget = SampleBudget::new(args.samples, args.seed);
    let (estimate, report) = cluster.pi_distributed(&budget, args.threads_per_worker)?;

    for call in &report.calls {
        println!(
            "worker {:<12} {:<24} {:.6} s",
            call.worker, call.shard, call.seconds
        );
    }
    println!("total {:.6} s", report.total_seconds);
    println!(
        "pi estimate {:.10} ({} samples, seed {}, {} workers x {} threads)",
        estimate.value,
        estimate.samples_used,
        args.seed,
        report.calls.len(),
        args.threads_per_worker
    );
    Ok(())
}

fn cmd_run_matvec(args: RunMatvecArgs) -> anyhow::Result<()> {
    let topology = ClusterTopology::from_file(&args.topology)
        .with_context(|| format!("loading topology {}", args.topology.display()))?;
    let mut cluster = Cluster::connect(&topology)?;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
    let m = Matrix::random(args.rows, args.cols, &mut rng)?;
    let v = DenseVector::random(args.cols, &mut rng)?;

    let local_start = std::time::Instant::now();
    let local = matvec_sequential(&m, &v)?;
    let local_seconds = local_start.elapsed().as_secs_f64();

    let (result, report) = cluster.matvec_distributed(&m, &v)?;

    for call in &report.calls {
        println!(
            "worker {:<12} {:<24} {:.6} s",
            call.worker, call.shard, call.seconds
        );
    }
    let checksum: f64 = result.as_slice().iter().sum();
    println!(
        "total {:.6} s (local sequential: {:.6} s)",
        report.total_seconds, local_seconds
    );
    println!(
        "checksum {:.10e} ({} rows x {} cols, seed {})",
        checksum, args.rows, args.cols, args.seed
    );
    println!(
        "distributed result matches local computation: {}",
        if result == local { "yes" } else { "NO" }
    );
    if result != local {
        bail!("distributed matvec diverged from the local result");
    }
    Ok(())
}

fn cmd_advise(args: AdviseArgs) -> anyhow::Result<()> {
    let advice = advise_offload_with_latency(
        args.bits,
        args.bandwidth_bps,
        args.local_seconds,
        args.speedup,
        args.latency_seconds,
    )?;
    println!("{}", advice.rationale);
    println!(
        "recommended={} transfer_s={:.6e} ideal_remote_compute_s={:.6e} local_s={:.6e}",
        advice.recommended,
        advice.transfer_seconds,
        advice.ideal_remote_compute_seconds,
        advice.local_seconds
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> anyhow::Result<()> {
    let mut spec = SweepSpec::new(args.task);
    spec.workers = parse_range(&args.workers).map_err(|e| anyhow!("--workers: {e}"))?;
    spec.threads = parse_range(&args.threads).map_err(|e| anyhow!("--threads: {e}"))?;
    spec.runs = args.runs;
    spec.seed = args.seed;
    spec.discard_first = args.discard_first;
    if let Some(samples) = args.samples {
        spec.samples = samples;
    }
    if let Some(rows) = args.rows {
        spec.rows = rows;
    }
    if let Some(cols) = args.cols {
        spec.cols = cols;
    }

    // The loopback handle must outlive the sweep; dropping it tears the
    // workers down.
    let mut _loopback: Option<LoopbackCluster> = None;
    let topology = if args.task.is_remote() {
        match (&args.topology, args.loopback) {
            (Some(path), None) => ClusterTopology::from_file(path)
                .with_context(|| format!("loading topology {}", path.display()))?,
            (None, Some(n)) => {
                let options = LoopbackOptions {
                    max_threads: args.loopback_max_threads,
                    quiet: true,
                    ..LoopbackOptions::default()
                };
                let cluster = spawn_loopback_cluster_with(
                    &WorkerCommand::current_exe()?,
                    n,
                    args.base_port,
                    &options,
                )?;
                let topology = cluster.topology().clone();
                _loopback = Some(cluster);
                topology
            }
            (None, None) => bail!("remote task needs --topology FILE or --loopback K"),
            (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
        }
    } else {
        ClusterTopology::new(Vec::new(), "local")?
    };

    match run_sweep(&spec, &topology) {
        Ok(records) => {
            write_csv(&args.out, &records)?;
            summarize(&records);
            Ok(())
        }
        Err(SweepError::Incomplete {
            records,
            expected,
            cause,
        }) => {
            write_csv(&args.out, &records)?;
            summarize(&records);
            eprintln!(
                "sweep INCOMPLETE: {} of {} cells finished: {}",
                records.len(),
                expected,
                cause
            );
            Err(anyhow!("sweep incomplete: {cause}"))
        }
        Err(e) => Err(e.into()),
    }
}

fn write_csv(out: &Option<PathBuf>, records: &[BenchmarkRecord]) -> anyhow::Result<()> {
    let csv = emit_csv(records);
    match out {
        Some(path) => {
            std::fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?
        }
        None => std::io::stdout().write_all(csv.as_bytes())?,
    }
    Ok(())
}

fn summarize(records: &[BenchmarkRecord]) {
    if records.is_empty() {
        return;
    }
    eprintln!(
        "{:<18} {:>7} {:>7} {:>6} {:>12} {:>8}",
        "task", "workers", "threads", "total", "mean_s", "speedup"
    );
    for r in records {
        eprintln!(
            "{:<18} {:>7} {:>7} {:>6} {:>12.6} {:>8.2}",
            r.task.name(),
            r.workers,
            r.threads_per_worker,
            r.total_threads,
            r.mean_seconds,
            r.speedup
        );
    }
    let cores = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    eprintln!("{}", concurrency_guidance(cores));
}

/// Parses `A..B` (inclusive) or a single `K` into a range.
fn parse_range(text: &str) -> Result<RangeInclusive<u32>, String> {
    let parse_one = |s: &str| {
        s.trim()
            .parse::<u32>()
            .map_err(|_| format!("{s:?} is not a count"))
    };
    match text.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (parse_one(a)?, parse_one(b)?);
            if a > b {
                return Err(format!("empty range {text:?}"));
            }
            Ok(a..=b)
        }
        None => {
            let k = parse_one(text)?;
            Ok(k..=k)
        }
    }
}
