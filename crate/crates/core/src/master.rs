//! Master-side orchestration: split a task across the workers, issue
//! the remote calls concurrently, and aggregate the replies.
//!
//! A [`Cluster`] holds one open connection per worker. Each distributed
//! call spawns one dispatch lane per participating worker; a lane
//! writes its request, blocks on the reply, and records its call
//! duration, so calls to different workers overlap in time. Aggregation
//! happens after all lanes have joined. There is no fault tolerance: if
//! any worker is unreachable or answers with an error, the whole call
//! fails and names that worker.
//!
//! Sample budgets are split across workers here; each worker splits its
//! share across its own threads. Worker `i` draws from the stream-id
//! block starting at `i * STREAMS_PER_WORKER`, so every thread in the
//! cluster samples from a distinct random stream and results are
//! reproducible for a fixed seed regardless of where the work runs.

use std::net::TcpStream;
use std::time::Instant;

use thiserror::Error;

use crate::kernels::pool::ComputePool;
use crate::kernels::rng::{worker_stream_base, RngStreamSpec};
use crate::kernels::{combine_estimates, mc_pi_parallel, KernelError, PartialEstimate};
use crate::partition::{partition, shard_row_range, PartitionError};
use crate::protocol::{read_message, write_message, Message, ProtocolError};
use crate::types::{ClusterTopology, DenseVector, Matrix, PiEstimate, SampleBudget};

#[derive(Debug, Error)]
pub enum MasterError {
    #[error("cluster has no workers")]
    NoWorkers,
    #[error("call needs {needed} workers but the cluster has {available}")]
    TooFewWorkers { needed: usize, available: usize },
    #[error("failed to connect to worker {worker} at {addr}: {source}")]
    Connect {
        worker: String,
        addr: String,
        source: std::io::Error,
    },
    #[error("worker {worker}: transport failed: {source}")]
    Transport {
        worker: String,
        source: ProtocolError,
    },
    #[error("worker {worker} replied with error {code}: {message}")]
    WorkerFailure {
        worker: String,
        code: u16,
        message: String,
    },
    #[error("worker {worker} sent an unexpected {got} reply")]
    UnexpectedReply { worker: String, got: &'static str },
    #[error("worker {worker} echoed shard metadata that does not match its request")]
    ShardMismatch { worker: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

/// One worker's slice of a dispatch.
#[derive(Debug, Clone, PartialEq)]
pub struct CallReport {
    pub worker: String,
    pub shard: String,
    pub seconds: f64,
}

/// Timing record for one distributed call: per-worker call durations
/// plus the wall time of the whole dispatch (which is never less than
/// the slowest lane).
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchReport {
    pub calls: Vec<CallReport>,
    pub total_seconds: f64,
}

impl DispatchReport {
    /// Sum of per-worker call durations; with overlapping lanes this
    /// exceeds `total_seconds`.
    pub fn lane_seconds_sum(&self) -> f64 {
        self.calls.iter().map(|c| c.seconds).sum()
    }

    pub fn max_lane_seconds(&self) -> f64 {
        self.calls.iter().map(|c| c.seconds).fold(0.0, f64::max)
    }
}

struct Lane {
    name: String,
    stream: TcpStream,
}

fn call_worker(lane: &mut Lane, req: &Message) -> Result<(Message, f64), MasterError> {
    let start = Instant::now();
    write_message(&mut lane.stream, req).map_err(|source| MasterError::Transport {
        worker: lane.name.clone(),
        source,
    })?;
    let reply = read_message(&mut lane.stream).map_err(|source| MasterError::Transport {
        worker: lane.name.clone(),
        source,
    })?;
    let seconds = start.elapsed().as_secs_f64();
    match reply {
        Message::ErrorReply { code, message } => Err(MasterError::WorkerFailure {
            worker: lane.name.clone(),
            code,
            message,
        }),
        other => Ok((other, seconds)),
    }
}

/// Connected cluster: one persistent connection per worker, opened once
/// and reused for every call.
pub struct Cluster {
    lanes: Vec<Lane>,
}

impl std::fmt::Debug for Cluster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Cluster")
            .field("workers", &self.worker_names())
            .finish()
    }
}

impl Cluster {
    /// Connects to every worker in the topology. Fails (naming the
    /// worker) if any connection cannot be established.
    pub fn connect(topology: &ClusterTopology) -> Result<Self, MasterError> {
        if topology.workers().is_empty() {
            return Err(MasterError::NoWorkers);
        }
        let mut lanes = Vec::with_capacity(topology.workers().len());
        for w in topology.workers() {
            let addr = w.addr();
            let stream = TcpStream::connect(&addr).map_err(|source| MasterError::Connect {
                worker: w.name.clone(),
                addr: addr.clone(),
                source,
            })?;
            let _ = stream.set_nodelay(true);
            lanes.push(Lane {
                name: w.name.clone(),
                stream,
            });
        }
        Ok(Self { lanes })
    }

    pub fn worker_count(&self) -> usize {
        self.lanes.len()
    }

    pub fn worker_names(&self) -> Vec<String> {
        self.lanes.iter().map(|l| l.name.clone()).collect()
    }

    /// Round-trips a `Ping` on every lane.
    pub fn ping_all(&mut self) -> Result<(), MasterError> {
        for lane in &mut self.lanes {
            match call_worker(lane, &Message::Ping)? {
                (Message::Pong, _) => {}
                (other, _) => {
                    return Err(MasterError::UnexpectedReply {
                        worker: lane.name.clone(),
                        got: other.name(),
                    })
                }
            }
        }
        Ok(())
    }

    /// Asks every worker to rerun its warm-up pass.
    pub fn warmup_all(&mut self) -> Result<(), MasterError> {
        for lane in &mut self.lanes {
            match call_worker(lane, &Message::Warmup)? {
                (Message::WarmupDone, _) => {}
                (other, _) => {
                    return Err(MasterError::UnexpectedReply {
                        worker: lane.name.clone(),
                        got: other.name(),
                    })
                }
            }
        }
        Ok(())
    }

    /// Distributes a pi estimate over all connected workers.
    pub fn pi_distributed(
        &mut self,
        budget: &SampleBudget,
        threads_per_worker: u32,
    ) -> Result<(PiEstimate, DispatchReport), MasterError> {
        self.pi_on_first(self.worker_count(), budget, threads_per_worker)
    }

    /// Distributes a pi estimate over the first `workers` workers.
    ///
    /// The sample budget is split here; each worker receives only its
    /// count, the thread count, the seed, and its stream-id base.
    pub fn pi_on_first(
        &mut self,
        workers: usize,
        budget: &SampleBudget,
        threads_per_worker: u32,
    ) -> Result<(PiEstimate, DispatchReport), MasterError> {
        self.check_workers(workers)?;
        if budget.total_samples == 0 {
            return Err(MasterError::InvalidArgument(
                "sample budget must be at least 1".to_string(),
            ));
        }
        let plan = partition(budget.total_samples, workers)?;

        let outcomes = self.dispatch(workers, |i| {
            let share = plan.shares()[i];
            if share == 0 {
                return None;
            }
            Some(Message::PiRequest {
                samples: share,
                threads: threads_per_worker,
                base_seed: budget.base_seed,
                stream_base: worker_stream_base(i),
            })
        });
        let total_seconds = outcomes.total_seconds;

        let mut parts = Vec::with_capacity(workers);
        let mut calls = Vec::with_capacity(workers);
        for (i, outcome) in outcomes.lanes.into_iter().enumerate() {
            let name = self.lanes[i].name.clone();
            let share = plan.shares()[i];
            match outcome {
                None => calls.push(CallReport {
                    worker: name,
                    shard: "idle (0 samples)".to_string(),
                    seconds: 0.0,
                }),
                Some(Err(e)) => return Err(e),
                Some(Ok((Message::PiResponse { estimate, samples }, seconds))) => {
                    if samples != share {
                        return Err(MasterError::ShardMismatch { worker: name });
                    }
                    parts.push(PartialEstimate {
                        value: estimate,
                        samples,
                    });
                    calls.push(CallReport {
                        worker: name,
                        shard: format!("{share} samples"),
                        seconds,
                    });
                }
                Some(Ok((other, _))) => {
                    return Err(MasterError::UnexpectedReply {
                        worker: name,
                        got: other.name(),
                    })
                }
            }
        }
        let estimate = combine_estimates(&parts)?;
        Ok((
            estimate,
            DispatchReport {
                calls,
                total_seconds,
            },
        ))
    }

    /// Distributes `C = M * V` over all connected workers.
    pub fn matvec_distributed(
        &mut self,
        m: &Matrix,
        v: &DenseVector,
    ) -> Result<(DenseVector, DispatchReport), MasterError> {
        self.matvec_on_first(self.worker_count(), m, v)
    }

    /// Row-partitions `M` over the first `workers` workers, sending each
    /// its row block plus the full `V`, and reassembles `C` in row
    /// order. The result is bit-identical to the sequential product.
    pub fn matvec_on_first(
        &mut self,
        workers: usize,
        m: &Matrix,
        v: &DenseVector,
    ) -> Result<(DenseVector, DispatchReport), MasterError> {
        self.check_workers(workers)?;
        if v.len() != m.cols() {
            return Err(MasterError::Kernel(KernelError::DimensionMismatch {
                cols: m.cols(),
                vector_len: v.len(),
            }));
        }
        if m.rows() > u32::MAX as usize || m.cols() > u32::MAX as usize {
            return Err(MasterError::InvalidArgument(
                "matrix dimensions exceed the wire format".to_string(),
            ));
        }
        let plan = partition(m.rows() as u64, workers)?;
        let ranges: Vec<(u64, u64)> = (0..workers)
            .map(|i| shard_row_range(&plan, i))
            .collect::<Result<_, _>>()?;

        let outcomes = self.dispatch(workers, |i| {
            let (start, count) = ranges[i];
            if count == 0 {
                return None;
            }
            Some(Message::MatvecRequest {
                start_row: start as u32,
                rows: count as u32,
                cols: m.cols() as u32,
                row_data: m.row_block(start as usize, count as usize).to_vec(),
                vector: v.as_slice().to_vec(),
            })
        });
        let total_seconds = outcomes.total_seconds;

        let mut out = vec![0.0; m.rows()];
        let mut calls = Vec::with_capacity(workers);
        for (i, outcome) in outcomes.lanes.into_iter().enumerate() {
            let name = self.lanes[i].name.clone();
            let (start, count) = ranges[i];
            match outcome {
                None => calls.push(CallReport {
                    worker: name,
                    shard: "idle (0 rows)".to_string(),
                    seconds: 0.0,
                }),
                Some(Err(e)) => return Err(e),
                Some(Ok((
                    Message::MatvecResponse {
                        start_row,
                        rows,
                        result,
                    },
                    seconds,
                ))) => {
                    if start_row as u64 != start || rows as u64 != count {
                        return Err(MasterError::ShardMismatch { worker: name });
                    }
                    out[start as usize..(start + count) as usize].copy_from_slice(&result);
                    calls.push(CallReport {
                        worker: name,
                        shard: format!("rows {start}..{}", start + count),
                        seconds,
                    });
                }
                Some(Ok((other, _))) => {
                    return Err(MasterError::UnexpectedReply {
                        worker: name,
                        got: other.name(),
                    })
                }
            }
        }
        Ok((
            DenseVector::new(out).map_err(KernelError::Shape)?,
            DispatchReport {
                calls,
                total_seconds,
            },
        ))
    }

    fn check_workers(&self, workers: usize) -> Result<(), MasterError> {
        if self.lanes.is_empty() || workers == 0 {
            return Err(MasterError::NoWorkers);
        }
        if workers > self.lanes.len() {
            return Err(MasterError::TooFewWorkers {
                needed: workers,
                available: self.lanes.len(),
            });
        }
        Ok(())
    }

    /// Runs one blocking request/response per participating lane, all
    /// lanes concurrently, and joins before returning. `None` requests
    /// mark idle lanes.
    fn dispatch<F>(&mut self, workers: usize, request_for: F) -> DispatchOutcome
    where
        F: Fn(usize) -> Option<Message> + Sync,
    {
        let start = Instant::now();
        let mut slots: Vec<Option<Result<(Message, f64), MasterError>>> =
            (0..workers).map(|_| None).collect();
        std::thread::scope(|s| {
            for (i, (lane, slot)) in self.lanes[..workers]
                .iter_mut()
                .zip(slots.iter_mut())
                .enumerate()
            {
                if let Some(req) = request_for(i) {
                    s.spawn(move || {
                        *slot = Some(call_worker(lane, &req));
                    });
                }
            }
        });
        DispatchOutcome {
            lanes: slots,
            total_seconds: start.elapsed().as_secs_f64(),
        }
    }
}

struct DispatchOutcome {
    lanes: Vec<Option<Result<(Message, f64), MasterError>>>,
    total_seconds: f64,
}

/// Runs the pi estimate in-process on the given pool; the baseline side
/// of local-versus-remote comparisons. Returns the estimate and the
/// wall time of the kernel call.
///
/// Uses stream base 0, the same block a sole worker would use, so a
/// local run and a one-worker distributed run of the same budget yield
/// identical estimates.
pub fn pi_local(
    pool: &ComputePool,
    budget: &SampleBudget,
    threads: usize,
) -> Result<(PiEstimate, f64), MasterError> {
    let start = Instant::now();
    let est = mc_pi_parallel(
        pool,
        budget.total_samples,
        threads,
        RngStreamSpec::new(budget.base_seed, 0),
    )?;
    Ok((est, start.elapsed().as_secs_f64()))
}
