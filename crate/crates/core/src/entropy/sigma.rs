//! Per-point bandwidth of the exponential kNN kernel.
//!
//! For a point with neighbor distances `d_1..d_k` the bandwidth `sigma` solves
//! `sum_j exp(-d_j / sigma) = log2(k)`. The left side increases monotonically
//! in `sigma` (from the number of zero distances up to `k`), so bisection on a
//! fixed bracket finds the unique root whenever one exists.

use crate::error::{Error, Result};

pub const SIGMA_MIN: f64 = 1e-20;
pub const SIGMA_MAX: f64 = 1e20;
pub const MAX_ITERATIONS: u32 = 128;
/// Largest accepted `|sum - log2(k)|` for a non-degenerate solution.
pub const RESIDUAL_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaSolution {
    pub sigma: f64,
    /// `sum_j exp(-d_j / sigma) - log2(k)` at the returned `sigma`.
    pub residual: f64,
    /// Set when no `sigma` in the bracket reaches the target, e.g. when all
    /// distances are zero and the kernel sum is pinned at `k`.
    pub degenerate: bool,
    pub iterations: u32,
}

pub(crate) fn kernel_sum(dists: &[f64], sigma: f64) -> f64 {
    dists.iter().map(|d| (-d / sigma).exp()).sum()
}

/// Solves for the kernel bandwidth of one point given its `k` ascending
/// nearest-neighbor distances.
pub fn solve_sigma(dists: &[f64], k: usize) -> Result<SigmaSolution> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    if dists.len() != k {
        return Err(Error::InvalidArgument(format!(
            "expected {k} neighbor distances, got {}",
            dists.len()
        )));
    }
    if dists.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::InvalidArgument(
            "neighbor distances must be finite and non-negative".into(),
        ));
    }

    let target = (k as f64).log2();

    let at_min = kernel_sum(dists, SIGMA_MIN) - target;
    if at_min > RESIDUAL_TOLERANCE {
        return Ok(SigmaSolution {
            sigma: SIGMA_MIN,
            residual: at_min,
            degenerate: true,
            iterations: 0,
        });
    }
    let at_max = kernel_sum(dists, SIGMA_MAX) - target;
    if at_max < -RESIDUAL_TOLERANCE {
        return Ok(SigmaSolution {
            sigma: SIGMA_MAX,
            residual: at_max,
            degenerate: true,
            iterations: 0,
        });
    }

    // Bisect on the geometric midpoint: the bracket spans 40 decades, and an
    // arithmetic midpoint would need ~60 halvings before resolving small sigma.
    let (mut lo, mut hi) = (SIGMA_MIN, SIGMA_MAX);
    let mut best = (f64::INFINITY, SIGMA_MIN);
    let mut iterations = 0;
    for _ in 0..MAX_ITERATIONS {
        iterations += 1;
        let mid = (lo * hi).sqrt();
        let residual = kernel_sum(dists, mid) - target;
        if residual.abs() < best.0.abs() {
            best = (residual, mid);
        }
        if residual == 0.0 {
            break;
        }
        if residual > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi <= lo * (1.0 + 4.0 * f64::EPSILON) {
            break;
        }
    }

    let (residual, sigma) = best;
    Ok(SigmaSolution {
        sigma,
        residual,
        degenerate: residual.abs() > RESIDUAL_TOLERANCE,
        iterations,
    })
}
