//! `tma`: simulate, fit and test threshold moving-average models.

mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tma_core::{
    acf, aic, fit_ma, ljung_box, parse_experiment_file, power_curve, profile_threshold, report_rows, residuals_ma,
    residuals_tma, run_test, simulate_path, threshold_grid, CriticalMethod, Innovation, InnovationSpec,
    ModelOrders, PortmanteauResult, TestConfig, TmaError, TmaParams, LR_SCALE,
};

use crate::io::{read_series, read_text, write_csv_rows, write_json, write_series, CliError, CliResult};

const MIN_ROWS: usize = 50;

#[derive(Parser, Debug)]
#[command(name = "tma", version, about = "Threshold moving-average models and the sup-LR threshold test")]
struct Cli {
    /// Seed for every random draw; runs are reproducible by default.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a TMA(p, q, d) path to a one-column CSV.
    Simulate(SimulateArgs),
    /// Fit an MA or TMA model and report residual diagnostics.
    Fit(FitArgs),
    /// Test MA against TMA with the sup-LR statistic.
    Test(TestArgs),
    /// Run Monte Carlo experiments from a TOML file.
    Mc(McArgs),
    /// Autocorrelations and Ljung-Box statistics of a series.
    Diagnose(DiagnoseArgs),
}

#[derive(Args, Debug, Clone, Copy)]
struct OrderArgs {
    #[arg(long, default_value_t = 1)]
    p: usize,
    #[arg(long, default_value_t = 1)]
    q: usize,
    #[arg(long, default_value_t = 1)]
    d: usize,
}

impl OrderArgs {
    fn orders(&self) -> CliResult<ModelOrders> {
        Ok(ModelOrders::new(self.p, self.q, self.d)?)
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum InnovationKind {
    Normal,
    StudentT,
    Uniform,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    orders: OrderArgs,
    /// MA coefficients, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    phi: Vec<f64>,
    /// Threshold shifts, comma separated; zeros when omitted.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    psi: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    r: f64,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = tma_core::simulate::DEFAULT_BURN_IN)]
    burn_in: usize,
    #[arg(long, value_enum, default_value = "normal")]
    innovation: InnovationKind,
    /// Degrees of freedom for student-t innovations.
    #[arg(long, default_value_t = 5.0)]
    df: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum ModelKind {
    Ma,
    Tma,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum LbDf {
    /// Degrees of freedom reduced by the number of fitted coefficients.
    Adjusted,
    Unadjusted,
}

#[derive(Args, Debug, Clone, Copy)]
struct GridArgs {
    #[arg(long, default_value_t = 0.1)]
    beta1: f64,
    #[arg(long, default_value_t = 0.9)]
    beta2: f64,
    /// Cap on threshold candidates.
    #[arg(long, default_value_t = 60)]
    max_points: usize,
}

#[derive(Args, Debug)]
struct FitArgs {
    input: PathBuf,
    #[arg(long, value_enum, default_value = "ma")]
    model: ModelKind,
    #[command(flatten)]
    orders: OrderArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [11usize, 13, 15])]
    lags: Vec<usize>,
    #[arg(long, value_enum, default_value = "adjusted")]
    lb_df: LbDf,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum MethodArg {
    Auto,
    KernelSimulation,
    BrownianBridgeSpecialCase,
}

#[derive(Args, Debug)]
struct TestArgs {
    input: PathBuf,
    #[command(flatten)]
    orders: OrderArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [0.10, 0.05, 0.01])]
    alphas: Vec<f64>,
    /// Draws from the simulated limit distribution.
    #[arg(long, default_value_t = 25_000)]
    replications: usize,
    /// Cap on grid points used for the kernel simulation.
    #[arg(long, default_value_t = 60)]
    kernel_max_points: usize,
    /// Multiplier on the drop in the residual sum of squares.
    #[arg(long, default_value_t = LR_SCALE)]
    lr_factor: f64,
    #[arg(long, value_enum, default_value = "auto")]
    method: MethodArg,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct McArgs {
    /// Experiment file (TOML).
    config: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    input: PathBuf,
    #[arg(long, default_value_t = 20)]
    max_lag: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [11usize, 13, 15])]
    lags: Vec<usize>,
    /// Coefficients already estimated from the series.
    #[arg(long, default_value_t = 0)]
    fitted_params: usize,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Serialize)]
#[serde(untagged)]
enum OrdersOut {
    Ma { p: usize },
    Tma { p: usize, q: usize, d: usize },
}

#[derive(Serialize)]
struct FitReport {
    model: &'static str,
    orders: OrdersOut,
    phi: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    psi: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r_hat: Option<f64>,
    sse: f64,
    sigma2: f64,
    aic: f64,
    ljung_box: Vec<PortmanteauResult>,
}

#[derive(Serialize)]
struct ProfilePoint {
    r: f64,
    value: f64,
}

#[derive(Serialize)]
struct CriticalPoint {
    alpha: f64,
    q: f64,
}

#[derive(Serialize)]
struct Decision {
    alpha: f64,
    reject: bool,
}

#[derive(Serialize)]
struct TestReport {
    lr_n: f64,
    profile: Vec<ProfilePoint>,
    critical_values: Vec<CriticalPoint>,
    p_value: f64,
    method: &'static str,
    reject: Vec<Decision>,
}

#[derive(Serialize)]
struct DiagnoseReport {
    n: usize,
    acf: Vec<f64>,
    ljung_box: Vec<PortmanteauResult>,
}

fn load_series(path: &Path) -> CliResult<Vec<f64>> {
    let y = read_series(path)?;
    if y.len() < MIN_ROWS {
        return Err(CliError::Parse(format!(
            "{}: need at least {MIN_ROWS} rows, found {}",
            path.display(),
            y.len()
        )));
    }
    Ok(y)
}

fn cmd_simulate(a: &SimulateArgs, seed: u64) -> CliResult<()> {
    let orders = a.orders.orders()?;
    let psi = a.psi.clone().unwrap_or_else(|| vec![0.0; orders.q]);
    let params = TmaParams::new(a.phi.clone(), psi, a.r);
    let distribution = match a.innovation {
        InnovationKind::Normal => Innovation::StandardNormal,
        InnovationKind::StudentT => Innovation::StudentT { df: a.df },
        InnovationKind::Uniform => Innovation::UniformCentered,
    };
    let spec = InnovationSpec {
        distribution,
        sigma: a.sigma,
        seed,
        stream: 0,
    };
    let y = simulate_path(&orders, &params, a.n, a.burn_in, &spec)?;
    write_series(a.output.as_deref(), &y)
}

fn box_tests(res: &[f64], lags: &[usize], fitted: usize) -> CliResult<Vec<PortmanteauResult>> {
    lags.iter()
        .map(|m| ljung_box(res, *m, fitted).map_err(CliError::from))
        .collect()
}

fn cmd_fit(a: &FitArgs) -> CliResult<()> {
    let y = load_series(&a.input)?;
    let n = y.len();
    let report = match a.model {
        ModelKind::Ma => {
            let p = a.orders.p;
            let fit = fit_ma(&y, p)?;
            let res = residuals_ma(&y, &fit.params.phi)?;
            let fitted = if a.lb_df == LbDf::Adjusted { p } else { 0 };
            FitReport {
                model: "ma",
                orders: OrdersOut::Ma { p },
                aic: aic(n, fit.sse, p)?,
                ljung_box: box_tests(&res.eps, &a.lags, fitted)?,
                phi: fit.params.phi,
                psi: None,
                r_hat: None,
                sse: fit.sse,
                sigma2: fit.sigma2,
            }
        }
        ModelKind::Tma => {
            let orders = a.orders.orders()?;
            let grid = threshold_grid(&y, a.grid.beta1, a.grid.beta2, a.grid.max_points)?;
            let prof = profile_threshold(&y, &orders, &grid)?;
            if prof.failures > 0 {
                eprintln!("warning: {} threshold fits failed and were skipped", prof.failures);
            }
            let fit = prof.fits[prof.best].clone().expect("best fit exists");
            let res = residuals_tma(&y, &fit.params, &orders)?;
            let k = orders.n_coefficients();
            let fitted = if a.lb_df == LbDf::Adjusted { k } else { 0 };
            FitReport {
                model: "tma",
                orders: OrdersOut::Tma {
                    p: orders.p,
                    q: orders.q,
                    d: orders.d,
                },
                aic: aic(n, fit.sse, k + 1)?,
                ljung_box: box_tests(&res.eps, &a.lags, fitted)?,
                phi: fit.params.phi,
                psi: Some(fit.params.psi),
                r_hat: Some(prof.r_hat),
                sse: fit.sse,
                sigma2: fit.sigma2,
            }
        }
    };
    write_json(a.output.as_deref(), &report)
}

fn cmd_test(a: &TestArgs, seed: u64) -> CliResult<()> {
    let y = load_series(&a.input)?;
    let orders = a.orders.orders()?;
    let cfg = TestConfig {
        beta1: a.grid.beta1,
        beta2: a.grid.beta2,
        alphas: a.alphas.clone(),
        replications: a.replications,
        seed,
        max_points: a.grid.max_points,
        kernel_max_points: a.kernel_max_points,
        lr_scale: a.lr_factor,
        method: match a.method {
            MethodArg::Auto => None,
            MethodArg::KernelSimulation => Some(CriticalMethod::KernelSimulation),
            MethodArg::BrownianBridgeSpecialCase => Some(CriticalMethod::BrownianBridgeSpecialCase),
        },
        bridge_grid_points: None,
    };
    let out = run_test(&y, &orders, &cfg)?;
    if out.profile.failures > 0 {
        eprintln!("warning: {} threshold fits failed and were skipped", out.profile.failures);
    }
    let report = TestReport {
        lr_n: out.profile.lr_n,
        profile: out
            .profile
            .points()
            .into_iter()
            .map(|(r, value)| ProfilePoint { r, value })
            .collect(),
        critical_values: out
            .critical
            .alphas
            .iter()
            .zip(&out.critical.quantiles)
            .map(|(alpha, q)| CriticalPoint { alpha: *alpha, q: *q })
            .collect(),
        p_value: out.p_value,
        method: out.critical.method.as_str(),
        reject: out
            .reject
            .iter()
            .map(|(alpha, reject)| Decision {
                alpha: *alpha,
                reject: *reject,
            })
            .collect(),
    };
    write_json(a.output.as_deref(), &report)
}

fn cmd_mc(a: &McArgs, seed: u64) -> CliResult<()> {
    let text = read_text(&a.config)?;
    let configs = parse_experiment_file(&text, seed)?;
    let reports = power_curve(&configs)?;
    for r in &reports {
        eprintln!(
            "{} n={}: {} replications, {} failures, {:.1}s",
            r.name,
            r.n,
            r.replications,
            r.failures,
            r.wall_time.as_secs_f64()
        );
    }
    let rows: Vec<_> = reports.iter().flat_map(report_rows).collect();
    write_csv_rows(a.output.as_deref(), &rows)
}

fn cmd_diagnose(a: &DiagnoseArgs) -> CliResult<()> {
    let y = read_series(&a.input)?;
    let report = DiagnoseReport {
        n: y.len(),
        acf: acf(&y, a.max_lag)?,
        ljung_box: box_tests(&y, &a.lags, a.fitted_params)?,
    };
    write_json(a.output.as_deref(), &report)
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(TmaError::InvalidSpec("--threads must be at least 1".into()).into());
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, cli.seed),
        Command::Fit(a) => cmd_fit(a),
        Command::Test(a) => cmd_test(a, cli.seed),
        Command::Mc(a) => cmd_mc(a, cli.seed),
        Command::Diagnose(a) => cmd_diagnose(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
