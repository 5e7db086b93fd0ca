//! Monte Carlo size and power experiments.
//!
//! Replication `k` draws its innovations from stream `k` of `base_seed`, so
//! designs sharing a seed use common random numbers and reports do not depend
//! on the thread count.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TmaError};
use crate::lr_test::{
    brownian_bridge_critical_values, critical_values_for, lr_profile_with, CriticalMethod, CriticalValues,
    TestConfig, LR_SCALE,
};
use crate::estimate::{threshold_grid, ProfileMode};
use crate::model::{ModelOrders, TmaParams};
use crate::simulate::{simulate_local_alternative, simulate_path, Innovation, InnovationSpec, DEFAULT_BURN_IN};

/// Largest tolerated share of failed replications.
pub const MAX_FAILURE_SHARE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Design {
    NullMa { phi: Vec<f64> },
    TmaAlternative { phi: Vec<f64>, psi: Vec<f64>, r: f64 },
    /// `psi = h / sqrt(n)` at threshold `r0`.
    LocalAlternative { phi: Vec<f64>, h: Vec<f64>, r0: f64 },
}

impl Design {
    pub fn label(&self) -> &'static str {
        match self {
            Design::NullMa { .. } => "null-ma",
            Design::TmaAlternative { .. } => "tma-alternative",
            Design::LocalAlternative { .. } => "local-alternative",
        }
    }

    fn simulate(&self, orders: &ModelOrders, n: usize, burn_in: usize, spec: &InnovationSpec) -> Result<Vec<f64>> {
        let y = match self {
            Design::NullMa { phi } => {
                let params = TmaParams::new(phi.clone(), vec![0.0; orders.q], 0.0);
                simulate_path(orders, &params, n, burn_in, spec)?
            }
            Design::TmaAlternative { phi, psi, r } => {
                simulate_path(orders, &TmaParams::new(phi.clone(), psi.clone(), *r), n, burn_in, spec)?
            }
            Design::LocalAlternative { phi, h, r0 } => {
                simulate_local_alternative(orders, phi, h, *r0, n, burn_in, spec)?
            }
        };
        Ok(y.into_inner())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(flatten)]
    pub design: Design,
    pub orders: ModelOrders,
    pub n: usize,
    pub replications: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub alphas: Vec<f64>,
    pub base_seed: u64,
    pub burn_in: usize,
    pub max_points: usize,
    /// Draws for the data-free bridge critical values, simulated once.
    pub critical_replications: usize,
    /// Draws for per-replication kernel critical values.
    pub kernel_draws: usize,
    pub innovation: Innovation,
    pub lr_scale: f64,
}

impl ExperimentConfig {
    pub fn new(name: impl Into<String>, design: Design, orders: ModelOrders, n: usize, replications: usize) -> Self {
        ExperimentConfig {
            name: name.into(),
            design,
            orders,
            n,
            replications,
            beta1: 0.1,
            beta2: 0.9,
            alphas: vec![0.10, 0.05, 0.01],
            base_seed: 0,
            burn_in: DEFAULT_BURN_IN,
            max_points: 60,
            critical_replications: 25_000,
            kernel_draws: 2_000,
            innovation: Innovation::StandardNormal,
            lr_scale: LR_SCALE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.orders.validate()?;
        if self.replications == 0 {
            return Err(TmaError::InvalidSpec("replications must be at least 1".into()));
        }
        if self.n < 50 {
            return Err(TmaError::InvalidSpec(format!("n must be at least 50, got {}", self.n)));
        }
        let (phi, psi_len) = match &self.design {
            Design::NullMa { phi } => (phi, self.orders.q),
            Design::TmaAlternative { phi, psi, .. } => (phi, psi.len()),
            Design::LocalAlternative { phi, h, .. } => (phi, h.len()),
        };
        if phi.len() != self.orders.p || psi_len != self.orders.q {
            return Err(TmaError::InvalidSpec(format!(
                "design coefficients do not match orders (p={}, q={})",
                self.orders.p, self.orders.q
            )));
        }
        Ok(())
    }

    pub fn test_config(&self) -> TestConfig {
        TestConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            alphas: self.alphas.clone(),
            replications: self.kernel_draws,
            seed: self.base_seed,
            max_points: self.max_points,
            kernel_max_points: self.max_points,
            lr_scale: self.lr_scale,
            method: None,
            bridge_grid_points: None,
        }
    }

    /// Grid size of the threshold profile for a series of length `n`.
    pub fn profile_grid_points(&self) -> usize {
        let nf = self.n as f64;
        let lo = (nf * self.beta1 - 1e-9).ceil() as usize;
        let hi = (nf * self.beta2 + 1e-9).floor() as usize;
        (hi + 1).saturating_sub(lo).clamp(1, self.max_points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub design: String,
    pub n: usize,
    pub alphas: Vec<f64>,
    pub rejection_rates: Vec<f64>,
    pub mc_stderr: Vec<f64>,
    pub replications: usize,
    pub failures: usize,
    pub base_seed: u64,
    pub method: CriticalMethod,
    #[serde(serialize_with = "duration_secs")]
    pub wall_time: Duration,
    /// `lr_n` per replication, `NaN` where the replication failed.
    #[serde(skip)]
    pub statistics: Vec<f64>,
    /// Shared critical values when they do not depend on the data.
    #[serde(skip)]
    pub critical: Option<CriticalValues>,
}

fn duration_secs<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

/// SplitMix64 finalizer, used to derive independent seeds from `base_seed`.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn critical_seed(base_seed: u64, replication: Option<usize>) -> u64 {
    let tag = mix(base_seed ^ 0x4352_4954_4943_414C);
    match replication {
        None => tag,
        Some(k) => mix(tag.wrapping_add(k as u64 + 1)),
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let tcfg = cfg.test_config();
    let method = tcfg.method_for(&cfg.orders);
    let shared = match method {
        CriticalMethod::BrownianBridgeSpecialCase => Some(brownian_bridge_critical_values(
            cfg.orders.p,
            cfg.beta1,
            cfg.beta2,
            cfg.profile_grid_points(),
            cfg.critical_replications,
            critical_seed(cfg.base_seed, None),
            &cfg.alphas,
        )?),
        CriticalMethod::KernelSimulation => None,
    };
    let outcomes: Vec<Result<(f64, Vec<bool>)>> = (0..cfg.replications)
        .into_par_iter()
        .map(|k| {
            let spec = InnovationSpec {
                distribution: cfg.innovation,
                sigma: 1.0,
                seed: cfg.base_seed,
                stream: k as u64,
            };
            let y = cfg.design.simulate(&cfg.orders, cfg.n, cfg.burn_in, &spec)?;
            let grid = threshold_grid(&y, cfg.beta1, cfg.beta2, cfg.max_points)?;
            let profile = lr_profile_with(&y, &cfg.orders, &grid, cfg.lr_scale, ProfileMode::Sequential)?;
            let local;
            let cv = match &shared {
                Some(cv) => cv,
                None => {
                    let rcfg = TestConfig {
                        seed: critical_seed(cfg.base_seed, Some(k)),
                        ..tcfg.clone()
                    };
                    local = critical_values_for(&y, &cfg.orders, &rcfg, &profile)?;
                    &local
                }
            };
            let decisions = cv.decisions(profile.lr_n).into_iter().map(|(_, r)| r).collect();
            Ok((profile.lr_n, decisions))
        })
        .collect();

    let failures = outcomes.iter().filter(|o| o.is_err()).count();
    if failures as f64 > MAX_FAILURE_SHARE * cfg.replications as f64 {
        let first = outcomes.iter().find_map(|o| o.as_ref().err()).unwrap();
        return Err(TmaError::Experiment(format!(
            "{failures} of {} replications failed (first: {first})",
            cfg.replications
        )));
    }
    let ok = cfg.replications - failures;
    let mut counts = vec![0usize; cfg.alphas.len()];
    let mut statistics = Vec::with_capacity(cfg.replications);
    for o in &outcomes {
        match o {
            Ok((stat, dec)) => {
                statistics.push(*stat);
                for (c, r) in counts.iter_mut().zip(dec) {
                    *c += usize::from(*r);
                }
            }
            Err(_) => statistics.push(f64::NAN),
        }
    }
    if ok == 0 {
        return Err(TmaError::Experiment("every replication failed".into()));
    }
    let rejection_rates: Vec<f64> = counts.iter().map(|c| *c as f64 / ok as f64).collect();
    let mc_stderr = rejection_rates
        .iter()
        .map(|p| (p * (1.0 - p) / ok as f64).sqrt())
        .collect();
    Ok(ExperimentReport {
        name: cfg.name.clone(),
        design: cfg.design.label().to_string(),
        n: cfg.n,
        alphas: cfg.alphas.clone(),
        rejection_rates,
        mc_stderr,
        replications: ok,
        failures,
        base_seed: cfg.base_seed,
        method,
        wall_time: start.elapsed(),
        statistics,
        critical: shared,
    })
}

pub fn power_curve(configs: &[ExperimentConfig]) -> Result<Vec<ExperimentReport>> {
    if configs.is_empty() {
        return Err(TmaError::InvalidSpec("no experiments given".into()));
    }
    configs.iter().map(run_experiment).collect()
}

/// One line of the machine-readable results table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McRow {
    pub design: String,
    pub n: usize,
    pub alpha: f64,
    pub rate: f64,
    pub stderr: f64,
    pub replications: usize,
    pub seed: u64,
}

pub fn report_rows(report: &ExperimentReport) -> Vec<McRow> {
    report
        .alphas
        .iter()
        .enumerate()
        .map(|(i, alpha)| McRow {
            design: report.name.clone(),
            n: report.n,
            alpha: *alpha,
            rate: report.rejection_rates[i],
            stderr: report.mc_stderr[i],
            replications: report.replications,
            seed: report.base_seed,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum SampleSizes {
    One(usize),
    Many(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct ExperimentEntry {
    name: Option<String>,
    #[serde(flatten)]
    design: Design,
    orders: ModelOrders,
    n: SampleSizes,
    replications: usize,
    beta1: Option<f64>,
    beta2: Option<f64>,
    alphas: Option<Vec<f64>>,
    base_seed: Option<u64>,
    burn_in: Option<usize>,
    max_points: Option<usize>,
    critical_replications: Option<usize>,
    kernel_draws: Option<usize>,
    innovation: Option<Innovation>,
    lr_scale: Option<f64>,
}

/// Parses an experiment file: an optional `[defaults]` table whose keys fill
/// in every `[[experiment]]` entry, with `n` either a size or a list of sizes.
/// Entries without a `base_seed` use `default_seed`.
pub fn parse_experiment_file(text: &str, default_seed: u64) -> Result<Vec<ExperimentConfig>> {
    let doc: toml::Table = text.parse().map_err(|e| TmaError::Config(format!("{e}")))?;
    for key in doc.keys() {
        if key != "defaults" && key != "experiment" {
            return Err(TmaError::Config(format!("unknown top-level key `{key}`")));
        }
    }
    let defaults = match doc.get("defaults") {
        None => toml::Table::new(),
        Some(toml::Value::Table(t)) => t.clone(),
        Some(_) => return Err(TmaError::Config("`defaults` must be a table".into())),
    };
    let entries = match doc.get("experiment") {
        Some(toml::Value::Array(a)) if !a.is_empty() => a,
        _ => return Err(TmaError::Config("at least one [[experiment]] entry is required".into())),
    };
    let mut out = Vec::new();
    for (i, entry) in entries.iter().enumerate() {
        let mut table = defaults.clone();
        match entry {
            toml::Value::Table(t) => table.extend(t.clone()),
            _ => return Err(TmaError::Config(format!("experiment {i} is not a table"))),
        }
        let e: ExperimentEntry = toml::Value::Table(table)
            .try_into()
            .map_err(|err| TmaError::Config(format!("experiment {i}: {err}")))?;
        let sizes = match &e.n {
            SampleSizes::One(n) => vec![*n],
            SampleSizes::Many(v) if !v.is_empty() => v.clone(),
            SampleSizes::Many(_) => return Err(TmaError::Config(format!("experiment {i}: empty n list"))),
        };
        for n in sizes {
            let name = e.name.clone().unwrap_or_else(|| e.design.label().to_string());
            let mut cfg = ExperimentConfig::new(name, e.design.clone(), e.orders, n, e.replications);
            cfg.beta1 = e.beta1.unwrap_or(cfg.beta1);
            cfg.beta2 = e.beta2.unwrap_or(cfg.beta2);
            cfg.alphas = e.alphas.clone().unwrap_or(cfg.alphas);
            cfg.base_seed = e.base_seed.unwrap_or(default_seed);
            cfg.burn_in = e.burn_in.unwrap_or(cfg.burn_in);
            cfg.max_points = e.max_points.unwrap_or(cfg.max_points);
            cfg.critical_replications = e.critical_replications.unwrap_or(cfg.critical_replications);
            cfg.kernel_draws = e.kernel_draws.unwrap_or(cfg.kernel_draws);
            cfg.innovation = e.innovation.unwrap_or(cfg.innovation);
            cfg.lr_scale = e.lr_scale.unwrap_or(cfg.lr_scale);
            cfg.validate()?;
            out.push(cfg);
        }
    }
    Ok(out)
}
