//! Innovation generation and TMA sample paths.
//!
//! All randomness comes from ChaCha8 generators addressed by `(seed, stream)`.
//! Replication `k` of an experiment uses `stream = base_stream + k`, so every
//! replication owns an independent generator and results do not depend on how
//! work is scheduled across threads.

use std::ops::Deref;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TmaError};
use crate::model::{ModelOrders, TmaParams};

pub const DEFAULT_BURN_IN: usize = 200;

/// Generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Observed series: nonempty and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Series(Vec<f64>);

impl Series {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(TmaError::Data("series is empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(TmaError::Data(format!(
                "non-finite value at index {i}"
            )));
        }
        Ok(Series(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn scaled(&self, c: f64) -> Series {
        Series(self.0.iter().map(|v| v * c).collect())
    }
}

impl Deref for Series {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Innovation {
    #[default]
    StandardNormal,
    /// Student t rescaled to unit variance.
    StudentT { df: f64 },
    /// Uniform on `[-sqrt(3), sqrt(3)]` (unit variance).
    UniformCentered,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnovationSpec {
    pub distribution: Innovation,
    pub sigma: f64,
    pub seed: u64,
    pub stream: u64,
}

impl InnovationSpec {
    pub fn normal(sigma: f64, seed: u64, stream: u64) -> Self {
        InnovationSpec {
            distribution: Innovation::StandardNormal,
            sigma,
            seed,
            stream,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(TmaError::InvalidSpec(format!(
                "sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        if let Innovation::StudentT { df } = self.distribution {
            if !(df > 4.0) {
                return Err(TmaError::InvalidSpec(format!(
                    "student-t innovations need df > 4 for a finite fourth moment, got {df}"
                )));
            }
        }
        Ok(())
    }
}

/// `n` i.i.d. draws with mean zero and standard deviation `sigma`.
pub fn gen_innovations(spec: &InnovationSpec, n: usize) -> Result<Series> {
    spec.validate()?;
    if n == 0 {
        return Err(TmaError::InvalidSpec("n must be at least 1".into()));
    }
    let mut rng = stream_rng(spec.seed, spec.stream);
    let values: Vec<f64> = match spec.distribution {
        Innovation::StandardNormal => (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * spec.sigma
            })
            .collect(),
        Innovation::StudentT { df } => {
            if !(df > 2.0) {
                return Err(TmaError::InvalidSpec(format!("student-t needs df > 2 for a finite variance, got {df}")));
            }
            let dist = StudentT::new(df)
                .map_err(|e| TmaError::InvalidSpec(format!("student-t: {e}")))?;
            let scale = ((df - 2.0) / df).sqrt();
            (0..n)
                .map(|_| dist.sample(&mut rng) * scale * spec.sigma)
                .collect()
        }
        Innovation::UniformCentered => {
            let half = 3f64.sqrt();
            (0..n)
                .map(|_| rng.random_range(-half..half) * spec.sigma)
                .collect()
        }
    };
    Series::new(values)
}

/// Runs the TMA recursion forward over `innovations` with zero pre-sample
/// values and drops the first `burn_in` outputs.
pub fn simulate_tma(
    orders: &ModelOrders,
    params: &TmaParams,
    innovations: &[f64],
    burn_in: usize,
) -> Result<Series> {
    params.check_lengths(orders)?;
    let r = params
        .r
        .ok_or_else(|| TmaError::InvalidSpec("threshold r is required to simulate".into()))?;
    if innovations.len() <= burn_in {
        return Err(TmaError::Length(format!(
            "{} innovations cannot cover a burn-in of {}",
            innovations.len(),
            burn_in
        )));
    }
    let total = innovations.len();
    let (p, q, d) = (orders.p, orders.q, orders.d);
    let mut y = vec![0.0; total];
    for t in 0..total {
        let mut acc = innovations[t];
        for i in 1..=p {
            if t >= i {
                acc += params.phi[i - 1] * innovations[t - i];
            }
        }
        let lagged = if t >= d { y[t - d] } else { 0.0 };
        if lagged <= r {
            for i in 1..=q {
                if t >= i {
                    acc += params.psi[i - 1] * innovations[t - i];
                }
            }
        }
        y[t] = acc;
    }
    Series::new(y.split_off(burn_in))
}

/// Draws `n + burn_in` innovations from `spec` and simulates a TMA path of length `n`.
pub fn simulate_path(
    orders: &ModelOrders,
    params: &TmaParams,
    n: usize,
    burn_in: usize,
    spec: &InnovationSpec,
) -> Result<Series> {
    let eps = gen_innovations(spec, n + burn_in)?;
    simulate_tma(orders, params, &eps, burn_in)
}

/// Path under the drifting alternative `psi = h / sqrt(n)` at threshold `r0`.
pub fn simulate_local_alternative(
    orders: &ModelOrders,
    phi: &[f64],
    h: &[f64],
    r0: f64,
    n: usize,
    burn_in: usize,
    spec: &InnovationSpec,
) -> Result<Series> {
    let params = TmaParams::new(phi.to_vec(), local_psi(h, n), r0);
    simulate_path(orders, &params, n, burn_in, spec)
}

pub fn local_psi(h: &[f64], n: usize) -> Vec<f64> {
    let root = (n as f64).sqrt();
    h.iter().map(|v| v / root).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn orders(p: usize, q: usize, d: usize) -> ModelOrders {
        ModelOrders::new(p, q, d).unwrap()
    }

    #[test]
    fn innovations_are_deterministic_and_scale_exactly() {
        let a = gen_innovations(&InnovationSpec::normal(1.0, 42, 0), 5).unwrap();
        let b = gen_innovations(&InnovationSpec::normal(1.0, 42, 0), 5).unwrap();
        assert_eq!(a, b);
        let c = gen_innovations(&InnovationSpec::normal(2.0, 42, 0), 5).unwrap();
        for (x, y) in a.iter().zip(c.iter()) {
            assert_eq!(2.0 * x, *y);
        }
        let other = gen_innovations(&InnovationSpec::normal(1.0, 42, 1), 5).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn innovation_moments() {
        let n = 100_000;
        for dist in [
            Innovation::StandardNormal,
            Innovation::StudentT { df: 8.0 },
            Innovation::UniformCentered,
        ] {
            let spec = InnovationSpec {
                distribution: dist,
                sigma: 1.0,
                seed: 3,
                stream: 0,
            };
            let e = gen_innovations(&spec, n).unwrap();
            let mean = e.iter().sum::<f64>() / n as f64;
            let var = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "{dist:?} mean {mean}");
            assert!((var - 1.0).abs() < 0.05, "{dist:?} var {var}");
        }
    }

    #[test]
    fn student_t_requires_fourth_moment() {
        let spec = InnovationSpec {
            distribution: Innovation::StudentT { df: 4.0 },
            sigma: 1.0,
            seed: 0,
            stream: 0,
        };
        assert!(matches!(
            gen_innovations(&spec, 10),
            Err(TmaError::InvalidSpec(_))
        ));
        assert!(gen_innovations(&InnovationSpec::normal(0.0, 0, 0), 10).is_err());
    }

    #[test]
    fn null_reduces_to_linear_ma() {
        let eps = gen_innovations(&InnovationSpec::normal(1.0, 1, 0), 300).unwrap();
        let params = TmaParams::new(vec![0.5], vec![0.0], 0.3);
        let y = simulate_tma(&orders(1, 1, 2), &params, &eps, 100).unwrap();
        for (k, v) in y.iter().enumerate() {
            let t = k + 100;
            assert_eq!(*v, eps[t] + 0.5 * eps[t - 1]);
        }
        // independent of r and d when psi = 0
        let other = TmaParams::new(vec![0.5], vec![0.0], -7.0);
        let y2 = simulate_tma(&orders(1, 1, 5), &other, &eps, 100).unwrap();
        assert_eq!(y, y2);
    }

    #[test]
    fn zero_coefficients_return_innovations() {
        let eps = gen_innovations(&InnovationSpec::normal(1.0, 9, 0), 50).unwrap();
        let params = TmaParams::new(vec![0.0], vec![0.0], 0.0);
        let y = simulate_tma(&orders(1, 1, 1), &params, &eps, 10).unwrap();
        assert_eq!(y.values(), &eps[10..]);
    }

    #[test]
    fn hand_recursion_tma112() {
        let params = TmaParams::new(vec![0.5], vec![-0.5], 0.0);
        let y = simulate_tma(&orders(1, 1, 2), &params, &[1.0, -1.0, 2.0], 0).unwrap();
        assert_abs_diff_eq!(y[0], 1.0);
        // the pre-sample y_0 = 0 sits at the threshold, so the shift is on
        assert_abs_diff_eq!(y[1], -1.0);
        // y_1 = 1 > 0 so the threshold term is off at t = 3
        assert_abs_diff_eq!(y[2], 1.5);
    }

    #[test]
    fn simulate_errors() {
        let mut params = TmaParams::new(vec![0.5], vec![-0.5], 0.0);
        assert!(matches!(
            simulate_tma(&orders(1, 1, 2), &params, &[1.0, 2.0], 2),
            Err(TmaError::Length(_))
        ));
        params.r = None;
        assert!(matches!(
            simulate_tma(&orders(1, 1, 2), &params, &[1.0, 2.0], 0),
            Err(TmaError::InvalidSpec(_))
        ));
    }

    #[test]
    fn threshold_scale_equivariance() {
        let eps = gen_innovations(&InnovationSpec::normal(1.0, 5, 0), 400).unwrap();
        let c = 4.0;
        let scaled: Vec<f64> = eps.iter().map(|v| v * c).collect();
        let base = TmaParams::new(vec![0.4], vec![-0.6], 0.25);
        let moved = TmaParams::new(vec![0.4], vec![-0.6], 0.25 * c);
        let y = simulate_tma(&orders(1, 1, 2), &base, &eps, 50).unwrap();
        let yc = simulate_tma(&orders(1, 1, 2), &moved, &scaled, 50).unwrap();
        for (a, b) in y.iter().zip(yc.iter()) {
            assert_abs_diff_eq!(c * a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn local_alternative_psi() {
        assert_abs_diff_eq!(local_psi(&[-5.0], 400)[0], -0.25);
        let spec = InnovationSpec::normal(1.0, 11, 3);
        let o = orders(1, 1, 2);
        let null = simulate_path(&o, &TmaParams::new(vec![0.5], vec![0.0], 0.0), 200, 50, &spec)
            .unwrap();
        let local = simulate_local_alternative(&o, &[0.5], &[0.0], 0.0, 200, 50, &spec).unwrap();
        assert_eq!(null, local);
    }
}
