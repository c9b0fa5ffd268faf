//! Desk-scale stand-in for a physical cluster: worker daemons spawned
//! as local child processes on 127.0.0.1.
//!
//! Each child announces its bound address as a `listening on HOST:PORT`
//! line on stdout (which makes port 0, pick-a-free-port, usable), and
//! the spawner then waits until every worker answers a ping — i.e.
//! until warm-up has finished. Tearing the handle down kills and reaps
//! every child; dropping it does the same.

use std::io::{BufRead, BufReader};
use std::net::TcpStream;
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::protocol::{read_message, write_message, Message};
use crate::types::{ClusterTopology, TopologyError, WorkerEndpoint};

#[derive(Debug, Error)]
pub enum LoopbackError {
    #[error("need at least one worker")]
    NoWorkers,
    #[error("base port {base} leaves no room for worker {index}")]
    PortRange { base: u16, index: usize },
    #[error("cannot locate the worker executable: {0}")]
    Exe(std::io::Error),
    #[error("failed to spawn worker {index}: {source}")]
    Spawn {
        index: usize,
        source: std::io::Error,
    },
    #[error("worker {index} did not announce a listen address: {detail}")]
    Startup { index: usize, detail: String },
    #[error("worker {name} at {addr} did not answer ping within {timeout:?}")]
    NotReady {
        name: String,
        addr: String,
        timeout: Duration,
    },
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// How to launch one worker process. The launcher appends
/// `--listen 127.0.0.1:PORT --max-threads K` to the given prefix.
#[derive(Debug, Clone)]
pub struct WorkerCommand {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl WorkerCommand {
    pub fn new(program: impl Into<PathBuf>, args: impl IntoIterator<Item = String>) -> Self {
        Self {
            program: program.into(),
            args: args.into_iter().collect(),
        }
    }

    /// Launches the current executable with its `worker` subcommand;
    /// the right default when the caller is the cluster CLI itself.
    pub fn current_exe() -> Result<Self, LoopbackError> {
        Ok(Self::new(
            std::env::current_exe().map_err(LoopbackError::Exe)?,
            ["worker".to_string()],
        ))
    }
}

/// Spawn-time knobs for loopback workers.
#[derive(Debug, Clone)]
pub struct LoopbackOptions {
    /// `--max-threads` passed to every worker.
    pub max_threads: usize,
    /// Discard worker stderr instead of inheriting it.
    pub quiet: bool,
    /// How long to wait for startup announcements and first pings.
    pub startup_timeout: Duration,
}

impl Default for LoopbackOptions {
    fn default() -> Self {
        Self {
            max_threads: 4,
            quiet: false,
            startup_timeout: Duration::from_secs(20),
        }
    }
}

/// Handle over a set of spawned loopback workers. Dropping it tears the
/// whole cluster down.
pub struct LoopbackCluster {
    children: Vec<Child>,
    topology: ClusterTopology,
}

impl std::fmt::Debug for LoopbackCluster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LoopbackCluster")
            .field("pids", &self.worker_pids())
            .field("topology", &self.topology)
            .finish()
    }
}

/// Spawns `n_workers` worker processes (the current executable's
/// `worker` subcommand) on consecutive ports starting at `base_port`,
/// or on free ports when `base_port` is 0, and waits until every one
/// answers a ping.
pub fn spawn_loopback_cluster(
    n_workers: usize,
    base_port: u16,
) -> Result<LoopbackCluster, LoopbackError> {
    spawn_loopback_cluster_with(
        &WorkerCommand::current_exe()?,
        n_workers,
        base_port,
        &LoopbackOptions::default(),
    )
}

/// [`spawn_loopback_cluster`] with an explicit worker launch command
/// and options.
pub fn spawn_loopback_cluster_with(
    cmd: &WorkerCommand,
    n_workers: usize,
    base_port: u16,
    options: &LoopbackOptions,
) -> Result<LoopbackCluster, LoopbackError> {
    if n_workers == 0 {
        return Err(LoopbackError::NoWorkers);
    }

    let mut children: Vec<Child> = Vec::with_capacity(n_workers);
    let mut endpoints = Vec::with_capacity(n_workers);
    // Kill everything started so far when any step fails.
    let cleanup = |children: &mut Vec<Child>| {
        for child in children.iter_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    };

    for index in 0..n_workers {
        let port = if base_port == 0 {
            0
        } else {
            match base_port.checked_add(index as u16) {
                Some(p) => p,
                None => {
                    cleanup(&mut children);
                    return Err(LoopbackError::PortRange {
                        base: base_port,
                        index,
                    });
                }
            }
        };
        let spawned = Command::new(&cmd.program)
            .args(&cmd.args)
            .arg("--listen")
            .arg(format!("127.0.0.1:{port}"))
            .arg("--max-threads")
            .arg(options.max_threads.to_string())
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(if options.quiet {
                Stdio::null()
            } else {
                Stdio::inherit()
            })
            .spawn();
        let mut child = match spawned {
            Ok(child) => child,
            Err(source) => {
                cleanup(&mut children);
                return Err(LoopbackError::Spawn { index, source });
            }
        };
        match read_listen_announcement(&mut child, options.startup_timeout) {
            Ok(port) => {
                endpoints.push(WorkerEndpoint::new(format!("lb{index}"), "127.0.0.1", port));
                children.push(child);
            }
            Err(detail) => {
                let _ = child.kill();
                let _ = child.wait();
                cleanup(&mut children);
                return Err(LoopbackError::Startup { index, detail });
            }
        }
    }

    let topology = ClusterTopology::new(endpoints, "local")?;
    let cluster = LoopbackCluster { children, topology };
    cluster.wait_until_ready(options.startup_timeout)?;
    Ok(cluster)
}

/// Reads the `listening on HOST:PORT` startup line from a child's
/// stdout, with a timeout, and returns the port.
fn read_listen_announcement(child: &mut Child, timeout: Duration) -> Result<u16, String> {
    let stdout = child.stdout.take().ok_or("stdout not piped")?;
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut line = String::new();
        let result = BufReader::new(stdout).read_line(&mut line);
        let _ = tx.send(result.map(|_| line));
    });
    let line = match rx.recv_timeout(timeout) {
        Ok(Ok(line)) => line,
        Ok(Err(e)) => return Err(format!("failed reading stdout: {e}")),
        Err(_) => return Err(format!("no announcement within {timeout:?}")),
    };
    let line = line.trim();
    let addr = line
        .strip_prefix("listening on ")
        .ok_or_else(|| exit_detail(child, line))?;
    let (_, port) = addr.rsplit_once(':').ok_or_else(|| exit_detail(child, line))?;
    port.parse::<u16>().map_err(|_| exit_detail(child, line))
}

fn exit_detail(child: &mut Child, line: &str) -> String {
    match child.try_wait() {
        Ok(Some(status)) => format!("process exited with {status} before announcing (got {line:?})"),
        _ => format!("unexpected announcement {line:?}"),
    }
}

impl LoopbackCluster {
    pub fn topology(&self) -> &ClusterTopology {
        &self.topology
    }

    pub fn worker_pids(&self) -> Vec<u32> {
        self.children.iter().map(Child::id).collect()
    }

    /// Pings every worker until it responds or the timeout expires.
    /// Workers answer only once their warm-up pass has finished, so a
    /// ready cluster is a warmed-up cluster.
    fn wait_until_ready(&self, timeout: Duration) -> Result<(), LoopbackError> {
        for endpoint in self.topology.workers() {
            let deadline = Instant::now() + timeout;
            loop {
                match ping_once(&endpoint.addr(), deadline.saturating_duration_since(Instant::now())) {
                    Ok(()) => break,
                    Err(_) if Instant::now() < deadline => {
                        std::thread::sleep(Duration::from_millis(20));
                    }
                    Err(_) => {
                        return Err(LoopbackError::NotReady {
                            name: endpoint.name.clone(),
                            addr: endpoint.addr(),
                            timeout,
                        })
                    }
                }
            }
        }
        Ok(())
    }

    /// Kills and reaps every worker, returning once all are gone.
    pub fn shutdown(mut self) -> Vec<Option<i32>> {
        self.teardown()
    }

    fn teardown(&mut self) -> Vec<Option<i32>> {
        let mut codes = Vec::with_capacity(self.children.len());
        for child in &mut self.children {
            let _ = child.kill();
            match child.wait() {
                Ok(status) => codes.push(status.code()),
                Err(_) => codes.push(None),
            }
        }
        self.children.clear();
        codes
    }
}

impl Drop for LoopbackCluster {
    fn drop(&mut self) {
        self.teardown();
    }
}

fn ping_once(addr: &str, budget: Duration) -> Result<(), String> {
    let mut stream = TcpStream::connect(addr).map_err(|e| e.to_string())?;
    stream
        .set_read_timeout(Some(budget.max(Duration::from_millis(10))))
        .map_err(|e| e.to_string())?;
    write_message(&mut stream, &Message::Ping).map_err(|e| e.to_string())?;
    match read_message(&mut stream) {
        Ok(Message::Pong) => Ok(()),
        Ok(other) => Err(format!("unexpected reply {}", other.name())),
        Err(e) => Err(e.to_string()),
    }
}
