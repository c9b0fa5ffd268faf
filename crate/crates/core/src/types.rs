//! Domain types shared by every module: matrices, vectors, cluster
//! topology, and Monte Carlo bookkeeping.

use std::fmt;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

/// Construction error for [`Matrix`] and [`DenseVector`].
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShapeError {
    #[error("matrix dimensions must be at least 1x1, got {rows}x{cols}")]
    EmptyMatrix { rows: usize, cols: usize },
    #[error("matrix data has {len} elements, expected {rows}x{cols} = {expected}")]
    DataLength {
        rows: usize,
        cols: usize,
        len: usize,
        expected: usize,
    },
    #[error("vector must contain at least one element")]
    EmptyVector,
}

/// Dense row-major matrix of 64-bit floats.
///
/// The row is the unit of distribution: shards handed to threads or
/// workers are contiguous row blocks, so row-major storage lets a shard
/// be sliced out without copying.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data. `data.len()` must equal
    /// `rows * cols` and both dimensions must be at least 1.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, ShapeError> {
        if rows == 0 || cols == 0 {
            return Err(ShapeError::EmptyMatrix { rows, cols });
        }
        let expected = rows
            .checked_mul(cols)
            .ok_or(ShapeError::EmptyMatrix { rows, cols })?;
        if data.len() != expected {
            return Err(ShapeError::DataLength {
                rows,
                cols,
                len: data.len(),
                expected,
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// n-by-n identity matrix.
    pub fn identity(n: usize) -> Result<Self, ShapeError> {
        let mut data = vec![0.0; n.checked_mul(n).unwrap_or(0)];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self::new(n, n, data)
    }

    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Result<Self, ShapeError> {
        let len = rows.checked_mul(cols).unwrap_or(0);
        Self::new(rows, cols, vec![0.0; len])
    }

    /// Matrix with entries drawn uniformly from [-1, 1).
    pub fn random<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Result<Self, ShapeError> {
        let len = rows
            .checked_mul(cols)
            .ok_or(ShapeError::EmptyMatrix { rows, cols })?;
        let data = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row-major backing data.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// One row as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Contiguous block of `count` rows starting at `start`, as raw
    /// row-major data. This is the shard payload shipped to a worker.
    pub fn row_block(&self, start: usize, count: usize) -> &[f64] {
        &self.data[start * self.cols..(start + count) * self.cols]
    }
}

/// Dense vector of 64-bit floats; always non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector {
    data: Vec<f64>,
}

impl DenseVector {
    pub fn new(data: Vec<f64>) -> Result<Self, ShapeError> {
        if data.is_empty() {
            return Err(ShapeError::EmptyVector);
        }
        Ok(Self { data })
    }

    /// Vector with entries drawn uniformly from [-1, 1).
    pub fn random<R: Rng>(len: usize, rng: &mut R) -> Result<Self, ShapeError> {
        Self::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

/// How many Monte Carlo samples to draw and from which seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleBudget {
    pub total_samples: u64,
    pub base_seed: u64,
}

impl SampleBudget {
    pub fn new(total_samples: u64, base_seed: u64) -> Self {
        Self {
            total_samples,
            base_seed,
        }
    }
}

/// A Monte Carlo estimate of pi together with the number of samples that
/// produced it. Each sampled term lies in [0, 4], so the estimate does
/// too.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiEstimate {
    pub value: f64,
    pub samples_used: u64,
}

/// One worker endpoint in the cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerEndpoint {
    pub name: String,
    pub host: String,
    pub port: u16,
}

impl WorkerEndpoint {
    pub fn new(name: impl Into<String>, host: impl Into<String>, port: u16) -> Self {
        Self {
            name: name.into(),
            host: host.into(),
            port,
        }
    }

    /// `host:port` form used for connecting.
    pub fn addr(&self) -> String {
        format!("{}:{}", self.host, self.port)
    }
}

impl fmt::Display for WorkerEndpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}:{}", self.name, self.host, self.port)
    }
}

/// Topology file or string parse error.
#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("line {line}: expected `name host:port`, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("line {line}: invalid port in {text:?}")]
    BadPort { line: usize, text: String },
    #[error("duplicate worker name {0:?}")]
    DuplicateName(String),
    #[error("failed to read topology file: {0}")]
    Io(#[from] std::io::Error),
}

/// Ordered list of worker endpoints plus the master's own name.
///
/// An empty worker list is legal and means local-only operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterTopology {
    workers: Vec<WorkerEndpoint>,
    master_name: String,
}

impl ClusterTopology {
    /// Builds a topology, rejecting duplicate worker names.
    pub fn new(
        workers: Vec<WorkerEndpoint>,
        master_name: impl Into<String>,
    ) -> Result<Self, TopologyError> {
        let mut seen = std::collections::HashSet::new();
        for w in &workers {
            if !seen.insert(w.name.as_str()) {
                return Err(TopologyError::DuplicateName(w.name.clone()));
            }
        }
        Ok(Self {
            workers,
            master_name: master_name.into(),
        })
    }

    /// Parses the line-oriented topology format: one worker per line as
    /// `name host:port`; `#` starts a comment; blank lines are ignored.
    /// The master is the invoking process and has no line of its own.
    pub fn parse(text: &str) -> Result<Self, TopologyError> {
        let mut workers = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let stripped = stripped.trim();
            if stripped.is_empty() {
                continue;
            }
            let mut parts = stripped.split_whitespace();
            let (name, addr) = match (parts.next(), parts.next(), parts.next()) {
                (Some(name), Some(addr), None) => (name, addr),
                _ => {
                    return Err(TopologyError::Malformed {
                        line,
                        text: raw.to_string(),
                    })
                }
            };
            let (host, port) = addr.rsplit_once(':').ok_or(TopologyError::Malformed {
                line,
                text: raw.to_string(),
            })?;
            let port: u16 = port.parse().map_err(|_| TopologyError::BadPort {
                line,
                text: raw.to_string(),
            })?;
            if host.is_empty() {
                return Err(TopologyError::Malformed {
                    line,
                    text: raw.to_string(),
                });
            }
            workers.push(WorkerEndpoint::new(name, host, port));
        }
        Self::new(workers, "local")
    }

    /// Reads and parses a topology file.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, TopologyError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn workers(&self) -> &[WorkerEndpoint] {
        &self.workers
    }

    pub fn master_name(&self) -> &str {
        &self.master_name
    }
}
