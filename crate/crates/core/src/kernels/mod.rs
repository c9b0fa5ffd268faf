//! The two computational tasks, in sequential and multithreaded form.
//!
//! Matrix-vector multiplication distributes rows: each thread computes
//! the dot products for its contiguous row block. Every row's dot
//! product is accumulated strictly left to right through one shared
//! helper, so the parallel result is bit-identical to the sequential
//! one for any thread count.
//!
//! Monte Carlo pi uses the average-value method: pi is estimated as the
//! mean of `4 * sqrt(1 - U^2)` over uniform draws U in [0, 1). Splitting
//! N samples over T threads and averaging the per-thread estimates
//! weighted by sample count reproduces the single-stream estimate up to
//! floating-point reassociation, and handles T not dividing N. Each
//! thread draws from its own random stream, so results are
//! deterministic for a given seed no matter where the threads run.

pub mod pool;
pub mod rng;

use thiserror::Error;

use crate::partition::{partition, shard_row_range, PartitionError};
use crate::types::{DenseVector, Matrix, PiEstimate, ShapeError};
use pool::ComputePool;
use rng::RngStreamSpec;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("vector length {vector_len} does not match matrix columns {cols}")]
    DimensionMismatch { cols: usize, vector_len: usize },
    #[error("sample count must be at least 1")]
    ZeroSamples,
    #[error("cannot combine an empty list of partial estimates")]
    NoPartials,
    #[error("partial estimate carries zero samples")]
    ZeroSamplePartial,
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// One thread's (or worker's) share of a Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialEstimate {
    pub value: f64,
    pub samples: u64,
}

/// Dot product accumulated strictly left to right.
///
/// Both matvec paths go through this helper; that is what makes the
/// parallel result bit-identical to the sequential one.
#[inline]
fn row_dot(row: &[f64], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in row.iter().zip(v) {
        acc += a * b;
    }
    acc
}

/// `C = M * V` computed row by row on the calling thread.
pub fn matvec_sequential(m: &Matrix, v: &DenseVector) -> Result<DenseVector, KernelError> {
    check_dims(m, v)?;
    let out: Vec<f64> = (0..m.rows()).map(|i| row_dot(m.row(i), v.as_slice())).collect();
    Ok(DenseVector::new(out)?)
}

/// `C = M * V` with rows distributed over `threads` shards on the pool.
///
/// Bit-identical to [`matvec_sequential`] for every thread count.
pub fn matvec_parallel(
    pool: &ComputePool,
    m: &Matrix,
    v: &DenseVector,
    threads: usize,
) -> Result<DenseVector, KernelError> {
    check_dims(m, v)?;
    let plan = partition(m.rows() as u64, threads)?;

    let mut out = vec![0.0; m.rows()];
    {
        // Carve the output into disjoint per-shard slices up front;
        // each task then owns its slice exclusively.
        let mut shards: Vec<(usize, &mut [f64])> = Vec::with_capacity(plan.shard_count());
        let mut rest: &mut [f64] = &mut out;
        for i in 0..plan.shard_count() {
            let (start, count) = shard_row_range(&plan, i)?;
            let (head, tail) = rest.split_at_mut(count as usize);
            shards.push((start as usize, head));
            rest = tail;
        }

        pool.scope(|s| {
            for (start, slice) in shards {
                if slice.is_empty() {
                    continue;
                }
                s.spawn(move |_| {
                    for (k, out_val) in slice.iter_mut().enumerate() {
                        *out_val = row_dot(m.row(start + k), v.as_slice());
                    }
                });
            }
        });
    }
    Ok(DenseVector::new(out)?)
}

fn check_dims(m: &Matrix, v: &DenseVector) -> Result<(), KernelError> {
    if v.len() != m.cols() {
        return Err(KernelError::DimensionMismatch {
            cols: m.cols(),
            vector_len: v.len(),
        });
    }
    Ok(())
}

/// The estimator core: mean of `4 * sqrt(1 - u^2)` over `n` draws,
/// summed strictly left to right.
fn pi_mean(n: u64, samples: impl Iterator<Item = f64>) -> f64 {
    let mut acc = 0.0;
    for u in samples.take(n as usize) {
        acc += (1.0 - u * u).sqrt();
    }
    4.0 * (acc / n as f64)
}

fn estimate_stream(samples: u64, stream: RngStreamSpec) -> PartialEstimate {
    PartialEstimate {
        value: pi_mean(samples, stream.sample_iter()),
        samples,
    }
}

/// Estimates pi from `samples` draws taken off one random stream.
pub fn mc_pi_sequential(samples: u64, stream: RngStreamSpec) -> Result<PiEstimate, KernelError> {
    if samples == 0 {
        return Err(KernelError::ZeroSamples);
    }
    let part = estimate_stream(samples, stream);
    Ok(PiEstimate {
        value: part.value,
        samples_used: part.samples,
    })
}

/// Estimates pi from an already materialized list of uniform samples.
///
/// Shares the accumulation path with [`mc_pi_sequential`], so a stubbed
/// sample list exercises exactly the arithmetic the live stream path
/// uses.
pub fn pi_estimate_from_samples(samples: &[f64]) -> Result<PiEstimate, KernelError> {
    if samples.is_empty() {
        return Err(KernelError::ZeroSamples);
    }
    Ok(PiEstimate {
        value: pi_mean(samples.len() as u64, samples.iter().copied()),
        samples_used: samples.len() as u64,
    })
}

/// Estimates pi with `samples` split over `threads` pool shards, each
/// drawing from its own derived stream (`base` plus the shard index).
///
/// Empty shards (more threads than samples) contribute nothing. With
/// one thread the result is identical to [`mc_pi_sequential`].
pub fn mc_pi_parallel(
    pool: &ComputePool,
    samples: u64,
    threads: usize,
    base: RngStreamSpec,
) -> Result<PiEstimate, KernelError> {
    if samples == 0 {
        return Err(KernelError::ZeroSamples);
    }
    let plan = partition(samples, threads)?;

    let mut slots: Vec<Option<PartialEstimate>> = vec![None; plan.shard_count()];
    pool.scope(|s| {
        for (i, slot) in slots.iter_mut().enumerate() {
            let share = plan.shares()[i];
            if share == 0 {
                continue;
            }
            let stream = base.for_thread(i);
            s.spawn(move |_| {
                *slot = Some(estimate_stream(share, stream));
            });
        }
    });

    let parts: Vec<PartialEstimate> = slots.into_iter().flatten().collect();
    combine_estimates(&parts)
}

/// Combines partial estimates into one, weighting each by its sample
/// count: `sum(value_i * n_i) / sum(n_i)`.
///
/// With equal counts this is the plain mean of the parts; the weighting
/// generalizes it to shard counts that do not divide the total. A single
/// part is returned unchanged, so degenerate one-way splits stay
/// bit-identical to the sequential path.
pub fn combine_estimates(parts: &[PartialEstimate]) -> Result<PiEstimate, KernelError> {
    if parts.is_empty() {
        return Err(KernelError::NoPartials);
    }
    if parts.iter().any(|p| p.samples == 0) {
        return Err(KernelError::ZeroSamplePartial);
    }
    if parts.len() == 1 {
        return Ok(PiEstimate {
            value: parts[0].value,
            samples_used: parts[0].samples,
        });
    }
    let mut weighted = 0.0;
    let mut total: u64 = 0;
    for p in parts {
        weighted += p.value * p.samples as f64;
        total += p.samples;
    }
    Ok(PiEstimate {
        value: weighted / total as f64,
        samples_used: total,
    })
}
