//! Testing a linear moving-average model against threshold moving-average
//! (TMA) alternatives with a sup quasi-likelihood-ratio statistic.
//!
//! The TMA(p, q, d) model is
//!
//! ```text
//! y_t = e_t + sum_{i<=p} phi_i e_{t-i} + sum_{i<=q} psi_i I(y_{t-d} <= r) e_{t-i}
//! ```
//!
//! and the null hypothesis is `psi = 0`. The threshold `r` is not identified
//! under the null, so the statistic is the supremum of the LR profile over a
//! grid of empirical quantiles and its critical values are simulated.
//!
//! ```
//! use tma_core::{run_test, simulate_path, InnovationSpec, ModelOrders, TestConfig, TmaParams};
//!
//! let orders = ModelOrders::new(1, 1, 2).unwrap();
//! let truth = TmaParams::new(vec![0.5], vec![0.8], 0.0);
//! let y = simulate_path(&orders, &truth, 400, 200, &InnovationSpec::normal(1.0, 1, 0)).unwrap();
//! let cfg = TestConfig { replications: 2000, ..TestConfig::default() };
//! let out = run_test(&y, &orders, &cfg).unwrap();
//! assert!(out.p_value < 0.05);
//! ```

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod estimate;
pub mod lr_test;
pub mod mc;
pub mod model;
pub mod residuals;
pub mod simulate;

pub use diagnostics::{acf, aic, ljung_box, PortmanteauResult};
pub use error::{ErrorKind, Result, TmaError};
pub use estimate::{
    fit_ma, fit_tma_fixed_r, profile_threshold, profile_threshold_with, threshold_grid, FitOptions, FitResult,
    ProfileMode, ThresholdGrid, ThresholdProfile,
};
pub use lr_test::{
    brownian_bridge_critical_values, estimate_kernel, lr_profile, lr_profile_with, run_test, run_test_with,
    simulate_kernel_critical_values, CriticalMethod, CriticalValues, KernelEstimate, LrProfile, TestConfig,
    TestOutcome, LR_SCALE,
};
pub use mc::{
    parse_experiment_file, power_curve, report_rows, run_experiment, Design, ExperimentConfig, ExperimentReport,
    McRow,
};
pub use model::{
    check_invertibility, companion_matrices, contraction_constant, geometric_envelope, product_norm_sequence,
    CompanionPair, ModelOrders, TmaParams,
};
pub use residuals::{
    default_truncation, regime_indicators, residuals_ma, residuals_tma, residuals_via_expansion, score_tma, sse,
    ResidualSet, ScoreSet,
};
pub use simulate::{
    gen_innovations, simulate_local_alternative, simulate_path, simulate_tma, Innovation, InnovationSpec, Series,
};
