//! Analytical communication-cost model and offload advisor.
//!
//! The model is deliberately minimal: transfer time is payload bits
//! divided by link bandwidth, assuming an ideal link with no framing,
//! marshaling, or contention. Offloading a task is worth it only when
//! that transfer time plus an idealized remote compute time still beats
//! computing locally. A 3000x3000 matrix-vector product loses badly on
//! a 100 Mbps link (the matrix alone takes longer to ship than the
//! whole local computation), while the pi task's few hundred bits make
//! remote execution essentially free to dispatch.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CostModelError {
    #[error("bandwidth must be positive and finite, got {0}")]
    BadBandwidth(f64),
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
}

/// Ideal-link transfer time for a payload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferEstimate {
    pub bits: u64,
    pub bandwidth_bps: f64,
    pub seconds: f64,
}

/// Computes `bits / bandwidth_bps` with no overhead terms.
pub fn transfer_time(bits: u64, bandwidth_bps: f64) -> Result<TransferEstimate, CostModelError> {
    if !(bandwidth_bps > 0.0) || !bandwidth_bps.is_finite() {
        return Err(CostModelError::BadBandwidth(bandwidth_bps));
    }
    Ok(TransferEstimate {
        bits,
        bandwidth_bps,
        seconds: bits as f64 / bandwidth_bps,
    })
}

/// Verdict on whether shipping a task to the cluster beats local
/// execution.
#[derive(Debug, Clone, PartialEq)]
pub struct OffloadAdvice {
    pub local_seconds: f64,
    pub transfer_seconds: f64,
    pub ideal_remote_compute_seconds: f64,
    pub recommended: bool,
    pub rationale: String,
}

/// Compares local execution against transfer plus idealized remote
/// compute (`local_seconds / speedup_factor`).
///
/// Offloading is recommended only on a strict win; a tie stays local.
/// The speedup factor is supplied by the caller (for example workers
/// times threads, or a measured value) because real compute scaling is
/// an empirical matter.
pub fn advise_offload(
    task_bits: u64,
    bandwidth_bps: f64,
    local_seconds: f64,
    speedup_factor: f64,
) -> Result<OffloadAdvice, CostModelError> {
    advise_offload_with_latency(task_bits, bandwidth_bps, local_seconds, speedup_factor, 0.0)
}

/// [`advise_offload`] with a constant per-call latency added to the
/// remote path, for sensitivity exploration. Latency must be finite and
/// non-negative; the default model uses zero.
pub fn advise_offload_with_latency(
    task_bits: u64,
    bandwidth_bps: f64,
    local_seconds: f64,
    speedup_factor: f64,
    latency_seconds: f64,
) -> Result<OffloadAdvice, CostModelError> {
    check_positive("task_bits", task_bits as f64)?;
    check_positive("local_seconds", local_seconds)?;
    check_positive("speedup_factor", speedup_factor)?;
    if !(latency_seconds >= 0.0) || !latency_seconds.is_finite() {
        return Err(CostModelError::NonPositive {
            name: "latency_seconds",
            value: latency_seconds,
        });
    }

    let transfer = transfer_time(task_bits, bandwidth_bps)?;
    let remote_compute = local_seconds / speedup_factor;
    let remote_total = transfer.seconds + latency_seconds + remote_compute;
    let recommended = remote_total < local_seconds;
    let rationale = format!(
        "remote: {:.6} s transfer + {:.6} s ideal compute{} = {:.6} s vs {:.6} s local -> {}",
        transfer.seconds,
        remote_compute,
        if latency_seconds > 0.0 {
            format!(" + {latency_seconds:.6} s latency")
        } else {
            String::new()
        },
        remote_total,
        local_seconds,
        if recommended {
            "offload"
        } else {
            "stay local"
        },
    );
    Ok(OffloadAdvice {
        local_seconds,
        transfer_seconds: transfer.seconds,
        ideal_remote_compute_seconds: remote_compute,
        recommended,
        rationale,
    })
}

fn check_positive(name: &'static str, value: f64) -> Result<(), CostModelError> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(CostModelError::NonPositive { name, value });
    }
    Ok(())
}
