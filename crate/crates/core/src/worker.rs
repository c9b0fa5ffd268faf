//! Worker daemon: binds a port, warms up its compute pool, then serves
//! kernel requests until the process is terminated.
//!
//! The daemon is brought up once and stays up; masters connect and hold
//! their connections open across calls. Each connection is serviced
//! serially (one request in flight at a time), while kernel execution
//! inside a request fans out onto the shared compute pool. Kernel-level
//! failures are answered with `ErrorReply` and the connection stays
//! alive; a malformed frame closes the connection.
//!
//! Before accepting any work the daemon runs a warm-up pass: one small
//! matrix-vector multiply and one small pi estimate, executed with the
//! configured warm-up thread count and discarded. That pays thread and
//! allocation startup costs before the first timed request arrives.

use std::io::Write as _;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::kernels::pool::{ComputePool, PoolError};
use crate::kernels::rng::RngStreamSpec;
use crate::kernels::{matvec_parallel, mc_pi_parallel};
use crate::protocol::{
    read_message_opt, write_message, Message, ERR_INVALID_ARGUMENT, ERR_UNEXPECTED_MESSAGE,
};
use crate::types::{DenseVector, Matrix};

#[derive(Debug, Error)]
pub enum WorkerError {
    #[error("failed to bind {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Pool(#[from] PoolError),
}

/// Worker daemon settings.
#[derive(Debug, Clone)]
pub struct WorkerConfig {
    /// `host:port` to listen on; port 0 picks a free port.
    pub listen: String,
    /// Upper bound on threads used for any single request.
    pub max_threads: usize,
    /// Threads used by the startup warm-up pass.
    pub warmup_threads: usize,
}

impl WorkerConfig {
    pub fn new(listen: impl Into<String>) -> Self {
        Self {
            listen: listen.into(),
            max_threads: 4,
            warmup_threads: 4,
        }
    }
}

/// Shared state of a running worker: the reusable compute pool plus the
/// warm-up flag.
pub struct WorkerState {
    pool: ComputePool,
    max_threads: usize,
    warmup_threads: usize,
    warmed: AtomicBool,
}

impl WorkerState {
    pub fn new(config: &WorkerConfig) -> Result<Self, WorkerError> {
        let max_threads = config.max_threads.max(1);
        Ok(Self {
            pool: ComputePool::new(max_threads)?,
            max_threads,
            warmup_threads: config.warmup_threads.max(1),
            warmed: AtomicBool::new(false),
        })
    }

    /// Number of ready threads in the compute pool.
    pub fn pool_threads(&self) -> usize {
        self.pool.threads()
    }

    /// Whether the warm-up pass has completed.
    pub fn warmed(&self) -> bool {
        self.warmed.load(Ordering::Acquire)
    }

    /// Runs one throwaway execution of each kernel on the pool.
    ///
    /// Results are discarded; failures are logged and do not stop the
    /// daemon. Repeatable: no state survives besides pool readiness.
    pub fn warmup(&self) {
        let threads = self.warmup_threads.min(self.max_threads);
        let m = Matrix::identity(64).expect("warmup matrix shape");
        let v = DenseVector::new(vec![1.0; 64]).expect("warmup vector shape");
        if let Err(e) = matvec_parallel(&self.pool, &m, &v, threads) {
            eprintln!("[worker] warmup matvec failed: {e}");
        }
        if let Err(e) = mc_pi_parallel(&self.pool, 10_000, threads, RngStreamSpec::new(0, 0)) {
            eprintln!("[worker] warmup pi failed: {e}");
        }
        self.warmed.store(true, Ordering::Release);
    }

    /// Computes the reply for one request. Kernel and argument failures
    /// become `ErrorReply`; this never panics on hostile input.
    pub fn handle_request(&self, msg: Message) -> Message {
        match msg {
            Message::Ping => Message::Pong,
            Message::Warmup => {
                self.warmup();
                Message::WarmupDone
            }
            Message::PiRequest {
                samples,
                threads,
                base_seed,
                stream_base,
            } => {
                // Oversubscribed thread requests are clamped, not
                // rejected; zero threads is a caller error.
                let threads = (threads as usize).min(self.max_threads);
                let stream = RngStreamSpec::new(base_seed, stream_base);
                match mc_pi_parallel(&self.pool, samples, threads, stream) {
                    Ok(est) => Message::PiResponse {
                        estimate: est.value,
                        samples: est.samples_used,
                    },
                    Err(e) => Message::ErrorReply {
                        code: ERR_INVALID_ARGUMENT,
                        message: e.to_string(),
                    },
                }
            }
            Message::MatvecRequest {
                start_row,
                rows,
                cols,
                row_data,
                vector,
            } => {
                let result = Matrix::new(rows as usize, cols as usize, row_data)
                    .map_err(|e| e.to_string())
                    .and_then(|m| {
                        let v = DenseVector::new(vector).map_err(|e| e.to_string())?;
                        matvec_parallel(&self.pool, &m, &v, self.max_threads)
                            .map_err(|e| e.to_string())
                    });
                match result {
                    Ok(c) => Message::MatvecResponse {
                        start_row,
                        rows,
                        result: c.into_vec(),
                    },
                    Err(message) => Message::ErrorReply {
                        code: ERR_INVALID_ARGUMENT,
                        message,
                    },
                }
            }
            other => Message::ErrorReply {
                code: ERR_UNEXPECTED_MESSAGE,
                message: format!("{} is not a request", other.name()),
            },
        }
    }
}

/// A bound, not yet running worker daemon.
pub struct Server {
    listener: TcpListener,
    state: Arc<WorkerState>,
}

impl Server {
    /// Binds the listen address and builds the compute pool. No work is
    /// accepted until [`Server::run`].
    pub fn bind(config: &WorkerConfig) -> Result<Self, WorkerError> {
        let listener = TcpListener::bind(&config.listen).map_err(|source| WorkerError::Bind {
            addr: config.listen.clone(),
            source,
        })?;
        Ok(Self {
            listener,
            state: Arc::new(WorkerState::new(config)?),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("listener has an address")
    }

    /// Handle on the shared worker state (pool readiness, warm-up flag).
    pub fn state(&self) -> Arc<WorkerState> {
        Arc::clone(&self.state)
    }

    /// Warms up, then accepts and serves connections forever.
    ///
    /// The warm-up completes before the first accept, so no request is
    /// ever answered by a cold pool. Runs until the process receives a
    /// termination signal.
    pub fn run(self) -> std::convert::Infallible {
        self.state.warmup();
        let local = self.local_addr();
        loop {
            match self.listener.accept() {
                Ok((stream, _peer)) => {
                    let state = Arc::clone(&self.state);
                    std::thread::Builder::new()
                        .name("worker-conn".to_string())
                        .spawn(move || handle_connection(stream, &state, local))
                        .ok();
                }
                Err(e) => eprintln!("[worker {local}] accept failed: {e}"),
            }
        }
    }
}

/// Serves one connection: one request at a time, reply, repeat until
/// the peer closes or a protocol error occurs.
fn handle_connection(mut stream: TcpStream, state: &WorkerState, local: SocketAddr) {
    let _ = stream.set_nodelay(true);
    loop {
        let msg = match read_message_opt(&mut stream) {
            Ok(Some(msg)) => msg,
            Ok(None) => return,
            Err(e) => {
                eprintln!("[worker {local}] protocol error, closing connection: {e}");
                return;
            }
        };
        let name = msg.name();
        let start = Instant::now();
        let reply = state.handle_request(msg);
        if let Err(e) = write_message(&mut stream, &reply) {
            eprintln!("[worker {local}] failed to write reply: {e}");
            return;
        }
        eprintln!(
            "[worker {local}] msg={name} dur_us={}",
            start.elapsed().as_micros()
        );
    }
}

/// Binds, announces the bound address on stdout, and serves forever.
///
/// The `listening on HOST:PORT` line is the startup handshake used by
/// process supervisors and the loopback spawner; it is printed exactly
/// once, before the warm-up pass begins.
#[allow(unreachable_code)]
pub fn serve(config: &WorkerConfig) -> Result<std::convert::Infallible, WorkerError> {
    let server = Server::bind(config)?;
    println!("listening on {}", server.local_addr());
    let _ = std::io::stdout().flush();
    eprintln!(
        "[worker {}] starting: max_threads={} warmup_threads={}",
        server.local_addr(),
        config.max_threads,
        config.warmup_threads
    );
    match server.run() {}
}
