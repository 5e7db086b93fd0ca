//! The sup quasi-LR statistic and the full test workflow.
//!
//! For each threshold candidate `r`, `values(r) = c * (L0 - L1(r)) / sigma2`
//! where `L0` and `L1(r)` are the null and alternative residual sums of
//! squares and `sigma2 = L0 / n`. The statistic is the maximum over the grid.

mod critical;
mod kernel;

pub use critical::{
    brownian_bridge_critical_values, simulate_kernel_critical_values, upper_quantile, CriticalMethod,
    CriticalValues,
};
pub use kernel::{estimate_kernel, KernelEstimate};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TmaError};
use crate::estimate::{
    fit_ma, profile_threshold_with, threshold_grid, FitOptions, FitResult, ProfileMode, ThresholdGrid,
};
use crate::model::ModelOrders;

/// Multiplier on the drop in the residual sum of squares. With `1.0` the
/// normalized statistic has a chi-square limit at a fixed threshold.
pub const LR_SCALE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LrProfile {
    pub grid: ThresholdGrid,
    /// `NaN` where the alternative fit failed.
    pub values: Vec<f64>,
    pub lr_n: f64,
    pub sigma2_null: f64,
    pub null_fit: FitResult,
    pub fits: Vec<Option<FitResult>>,
    pub failures: usize,
    pub r_hat: f64,
    pub scale: f64,
}

impl LrProfile {
    /// `(r, value)` pairs for candidates whose fit succeeded.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.grid
            .candidates()
            .iter()
            .zip(&self.values)
            .filter(|(_, v)| v.is_finite())
            .map(|(r, v)| (*r, *v))
            .collect()
    }
}

pub fn lr_profile(y: &[f64], orders: &ModelOrders, grid: &ThresholdGrid) -> Result<LrProfile> {
    lr_profile_with(y, orders, grid, LR_SCALE, ProfileMode::Sequential)
}

pub fn lr_profile_with(
    y: &[f64],
    orders: &ModelOrders,
    grid: &ThresholdGrid,
    scale: f64,
    mode: ProfileMode,
) -> Result<LrProfile> {
    orders.validate()?;
    let n = y.len();
    let need = 20 * orders.n_coefficients();
    if n <= need {
        return Err(TmaError::Length(format!(
            "LR test needs more than {need} observations, got {n}"
        )));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(TmaError::InvalidSpec(format!("statistic scale must be positive, got {scale}")));
    }
    let null_fit = fit_ma(y, orders.p)?;
    let l0 = null_fit.sse;
    if !(l0 > 0.0) {
        return Err(TmaError::Numerical("null fit has zero residual sum of squares".into()));
    }
    let sigma2_null = l0 / n as f64;
    let prof = profile_threshold_with(y, orders, grid, null_fit, mode, &FitOptions::default())?;
    let values: Vec<f64> = prof
        .fits
        .iter()
        .map(|f| match f {
            Some(f) => scale * (l0 - f.sse) / sigma2_null,
            None => f64::NAN,
        })
        .collect();
    let lr_n = values
        .iter()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    Ok(LrProfile {
        grid: prof.grid,
        values,
        lr_n,
        sigma2_null,
        null_fit: prof.null_fit,
        fits: prof.fits,
        failures: prof.failures,
        r_hat: prof.r_hat,
        scale,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub alphas: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    /// Cap on threshold candidates in the profile.
    pub max_points: usize,
    /// Cap on grid points used for the kernel simulation.
    pub kernel_max_points: usize,
    pub lr_scale: f64,
    /// Forces a critical-value method; chosen from the orders when absent.
    pub method: Option<CriticalMethod>,
    /// Bridge discretization; the profile grid size when absent.
    pub bridge_grid_points: Option<usize>,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            beta1: 0.1,
            beta2: 0.9,
            alphas: vec![0.10, 0.05, 0.01],
            replications: 25_000,
            seed: 0,
            max_points: 60,
            kernel_max_points: 60,
            lr_scale: LR_SCALE,
            method: None,
            bridge_grid_points: None,
        }
    }
}

impl TestConfig {
    pub fn method_for(&self, orders: &ModelOrders) -> CriticalMethod {
        self.method.unwrap_or(if orders.is_bridge_special_case() {
            CriticalMethod::BrownianBridgeSpecialCase
        } else {
            CriticalMethod::KernelSimulation
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestOutcome {
    pub profile: LrProfile,
    pub critical: CriticalValues,
    pub p_value: f64,
    pub reject: Vec<(f64, bool)>,
}

pub fn run_test(y: &[f64], orders: &ModelOrders, cfg: &TestConfig) -> Result<TestOutcome> {
    run_test_with(y, orders, cfg, None)
}

/// Runs the test, reusing `precomputed` critical values when given.
pub fn run_test_with(
    y: &[f64],
    orders: &ModelOrders,
    cfg: &TestConfig,
    precomputed: Option<&CriticalValues>,
) -> Result<TestOutcome> {
    let grid = threshold_grid(y, cfg.beta1, cfg.beta2, cfg.max_points)?;
    let profile = lr_profile_with(y, orders, &grid, cfg.lr_scale, ProfileMode::Sequential)?;
    let critical = match precomputed {
        Some(cv) => cv.clone(),
        None => critical_values_for(y, orders, cfg, &profile)?,
    };
    let p_value = critical.p_value(profile.lr_n);
    let reject = critical.decisions(profile.lr_n);
    Ok(TestOutcome {
        profile,
        critical,
        p_value,
        reject,
    })
}

/// Critical values for the test of `y`, using the null fit stored in `profile`.
pub fn critical_values_for(
    y: &[f64],
    orders: &ModelOrders,
    cfg: &TestConfig,
    profile: &LrProfile,
) -> Result<CriticalValues> {
    match cfg.method_for(orders) {
        CriticalMethod::BrownianBridgeSpecialCase => brownian_bridge_critical_values(
            orders.p,
            cfg.beta1,
            cfg.beta2,
            cfg.bridge_grid_points.unwrap_or(profile.grid.len()),
            cfg.replications,
            cfg.seed,
            &cfg.alphas,
        ),
        CriticalMethod::KernelSimulation => {
            let kgrid = profile.grid.thinned(cfg.kernel_max_points);
            let kernel = estimate_kernel(y, &profile.null_fit.params.phi, orders, kgrid.candidates())?;
            simulate_kernel_critical_values(&kernel, &cfg.alphas, cfg.replications, cfg.seed)
        }
    }
}
