//! Simulated critical values for the sup-LR statistic.
//!
//! Two routes are available. The general route draws the mean-zero Gaussian
//! process with covariance `K(r_i, r_j)` on the threshold grid and records
//! `max_i G(r_i)' K(r_i, r_i)^{-1} G(r_i)`. When `p = q < d` the limit reduces
//! to `sup ||B_p(s)||^2 / (s - s^2)` for a p-dimensional Brownian bridge, which
//! does not depend on the data and is simulated directly.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::KernelEstimate;
use crate::error::{Result, TmaError};
use crate::simulate::stream_rng;

const BATCH: usize = 512;
const MAX_JITTER_DOUBLINGS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriticalMethod {
    KernelSimulation,
    BrownianBridgeSpecialCase,
}

impl CriticalMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            CriticalMethod::KernelSimulation => "kernel-simulation",
            CriticalMethod::BrownianBridgeSpecialCase => "brownian-bridge-special-case",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalValues {
    pub alphas: Vec<f64>,
    /// Upper-`alpha` quantiles of the simulated limit, aligned with `alphas`.
    pub quantiles: Vec<f64>,
    pub replications: usize,
    pub method: CriticalMethod,
    #[serde(skip)]
    sorted_draws: Vec<f64>,
}

impl CriticalValues {
    pub fn from_draws(mut draws: Vec<f64>, alphas: &[f64], method: CriticalMethod) -> Result<Self> {
        validate_alphas(alphas)?;
        if draws.is_empty() || draws.iter().any(|d| !d.is_finite()) {
            return Err(TmaError::Numerical("simulated draws must be finite".into()));
        }
        draws.sort_by(f64::total_cmp);
        let quantiles = alphas.iter().map(|a| upper_quantile(&draws, *a)).collect();
        Ok(CriticalValues {
            alphas: alphas.to_vec(),
            quantiles,
            replications: draws.len(),
            method,
            sorted_draws: draws,
        })
    }

    /// Fraction of simulated draws at or above `stat`.
    pub fn p_value(&self, stat: f64) -> f64 {
        let below = self.sorted_draws.partition_point(|d| *d < stat);
        (self.sorted_draws.len() - below) as f64 / self.sorted_draws.len() as f64
    }

    /// `(alpha, stat > quantile)` for every level.
    pub fn decisions(&self, stat: f64) -> Vec<(f64, bool)> {
        self.alphas
            .iter()
            .zip(&self.quantiles)
            .map(|(a, q)| (*a, stat > *q))
            .collect()
    }

    pub fn quantile(&self, alpha: f64) -> Option<f64> {
        self.alphas
            .iter()
            .position(|a| (a - alpha).abs() < 1e-12)
            .map(|i| self.quantiles[i])
    }

    pub fn draws(&self) -> &[f64] {
        &self.sorted_draws
    }
}

fn validate_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(TmaError::InvalidSpec(format!(
            "significance levels must lie in (0, 1), got {alphas:?}"
        )));
    }
    Ok(())
}

/// Inverse-ECDF quantile at level `1 - alpha` of ascending `sorted`.
pub fn upper_quantile(sorted: &[f64], alpha: f64) -> f64 {
    let n = sorted.len();
    let rank = ((1.0 - alpha) * n as f64 - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// Batched, order-preserving parallel map over replications.
fn simulate_batched<F>(replications: usize, seed: u64, draw: F) -> Vec<f64>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> f64 + Sync,
{
    let batches = replications.div_ceil(BATCH);
    (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, b as u64);
            let count = BATCH.min(replications - b * BATCH);
            (0..count).map(|_| draw(&mut rng)).collect::<Vec<f64>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Cholesky factor of `c + jitter I`, doubling the jitter until it succeeds.
fn jittered_cholesky(c: &DMatrix<f64>, base: f64) -> Result<(DMatrix<f64>, f64)> {
    if let Some(ch) = c.clone().cholesky() {
        return Ok((ch.l(), 0.0));
    }
    let dim = c.nrows();
    let mut jitter = base;
    for _ in 0..=MAX_JITTER_DOUBLINGS {
        let mut m = c.clone();
        for i in 0..dim {
            m[(i, i)] += jitter;
        }
        if let Some(ch) = m.cholesky() {
            return Ok((ch.l(), jitter));
        }
        jitter *= 2.0;
    }
    Err(TmaError::KernelDegenerate(format!(
        "covariance of dimension {dim} not factorizable with jitter up to {jitter:.3e}"
    )))
}

/// Critical values from the Gaussian-process limit with covariance `kernel`.
pub fn simulate_kernel_critical_values(
    kernel: &KernelEstimate,
    alphas: &[f64],
    replications: usize,
    seed: u64,
) -> Result<CriticalValues> {
    validate_alphas(alphas)?;
    if replications < 1000 {
        return Err(TmaError::InvalidSpec(format!(
            "need at least 1000 replications, got {replications}"
        )));
    }
    let q = kernel.q;
    // grid points where the regime is empty carry no information
    let traces: Vec<f64> = (0..kernel.m()).map(|i| kernel.k_at(i, i).trace()).collect();
    let max_trace = traces.iter().cloned().fold(0.0, f64::max);
    if !(max_trace > 0.0) {
        return Err(TmaError::KernelDegenerate("kernel vanishes on the whole grid".into()));
    }
    let active: Vec<usize> = (0..kernel.m())
        .filter(|&i| traces[i] > 1e-12 * max_trace)
        .collect();
    let dim = q * active.len();
    let mut cov = DMatrix::zeros(dim, dim);
    for (a, &i) in active.iter().enumerate() {
        for (b, &j) in active.iter().enumerate() {
            let blk = kernel.k_at(i, j);
            for u in 0..q {
                for v in 0..q {
                    cov[(a * q + u, b * q + v)] = blk[(u, v)];
                }
            }
        }
    }
    let cov = (&cov + cov.transpose()) * 0.5;
    let base = 1e-8 * cov.trace() / dim as f64;
    let (chol, jitter) = jittered_cholesky(&cov, base)?;
    let inverses: Vec<DMatrix<f64>> = active
        .iter()
        .map(|&i| {
            let mut blk = kernel.k_at(i, i).clone();
            for u in 0..q {
                blk[(u, u)] += jitter;
            }
            let blk = (&blk + blk.transpose()) * 0.5;
            blk.try_inverse()
                .ok_or_else(|| TmaError::KernelDegenerate(format!("K(r, r) singular at grid point {i}")))
        })
        .collect::<Result<_>>()?;
    let draws = simulate_batched(replications, seed, |rng| {
        let z = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        let g = &chol * z;
        let mut best = f64::NEG_INFINITY;
        for (a, inv) in inverses.iter().enumerate() {
            let ga = g.rows(a * q, q);
            let stat = (ga.transpose() * inv * ga)[(0, 0)];
            best = best.max(stat);
        }
        best
    });
    CriticalValues::from_draws(draws, alphas, CriticalMethod::KernelSimulation)
}

/// Critical values of `sup_{beta1 <= s <= beta2} ||B_p(s)||^2 / (s - s^2)` on
/// an even grid of `grid_points` levels (the midpoint when `grid_points = 1`).
pub fn brownian_bridge_critical_values(
    p: usize,
    beta1: f64,
    beta2: f64,
    grid_points: usize,
    replications: usize,
    seed: u64,
    alphas: &[f64],
) -> Result<CriticalValues> {
    validate_alphas(alphas)?;
    if p == 0 {
        return Err(TmaError::InvalidSpec("bridge dimension must be positive".into()));
    }
    if !(beta1 > 0.0 && beta1 < beta2 && beta2 < 1.0) {
        return Err(TmaError::InvalidSpec(format!(
            "need 0 < beta1 < beta2 < 1, got ({beta1}, {beta2})"
        )));
    }
    if grid_points == 0 || replications == 0 {
        return Err(TmaError::InvalidSpec(
            "grid_points and replications must be positive".into(),
        ));
    }
    let levels: Vec<f64> = if grid_points == 1 {
        vec![0.5 * (beta1 + beta2)]
    } else {
        (0..grid_points)
            .map(|k| beta1 + (beta2 - beta1) * k as f64 / (grid_points - 1) as f64)
            .collect()
    };
    let weights: Vec<f64> = levels.iter().map(|s| 1.0 / (s - s * s)).collect();
    let last = *levels.last().unwrap();
    let draws = simulate_batched(replications, seed, |rng| {
        let mut acc = vec![0.0; levels.len()];
        let mut path = vec![0.0; levels.len()];
        for _ in 0..p {
            // Brownian motion on the grid, then pinned at 1
            let mut w = 0.0;
            let mut prev = 0.0;
            for (k, s) in levels.iter().enumerate() {
                let z: f64 = StandardNormal.sample(rng);
                w += z * (s - prev).sqrt();
                prev = *s;
                path[k] = w;
            }
            let z: f64 = StandardNormal.sample(rng);
            let w1 = w + z * (1.0 - last).sqrt();
            for (k, s) in levels.iter().enumerate() {
                let b = path[k] - s * w1;
                acc[k] += b * b;
            }
        }
        acc.iter()
            .zip(&weights)
            .map(|(a, w)| a * w)
            .fold(f64::NEG_INFINITY, f64::max)
    });
    CriticalValues::from_draws(draws, alphas, CriticalMethod::BrownianBridgeSpecialCase)
}
