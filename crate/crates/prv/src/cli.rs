//! Command-line surface: argument definitions, dispatch, and JSON reports.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::estimators::{prv, realized_variance, spot_prv, truncate_returns, EstimatorError};
use crate::experiments::{run_monte_carlo, scree_stats, ExperimentError, LambdaRule, Quantiles};
use crate::io::{
    export_panel_csv, ingest_csv, load_factor_model, load_scenario, GroundTruth, IngestOptions,
    IoError, Scenario,
};
use crate::matrix::{effective_rank, MatrixError, SymmetricMatrix};
use crate::simulator::{simulate_cox_scenario, simulate_factor_model, SimulatorError};
use crate::tuning::{
    bootstrap_lambda, gaussian_lambda_star, BootstrapConfig, Center, TuningError,
};

/// Environment variable consulted when --seed is not given.
pub const SEED_ENV: &str = "PRV_SEED";

#[derive(Parser, Debug)]
#[command(
    name = "prv",
    version,
    about = "Penalized realized variance estimation for high-frequency return panels"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CenterArg {
    Median,
    Mean,
}

impl From<CenterArg> for Center {
    fn from(value: CenterArg) -> Self {
        match value {
            CenterArg::Median => Center::Median,
            CenterArg::Mean => Center::Mean,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TuneMethod {
    Bootstrap,
    Gaussian,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate the PRV of a return panel, with explicit or tuned shrinkage.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        /// Explicit shrinkage level; conflicts with --tune.
        #[arg(long, conflicts_with = "tune")]
        lambda: Option<f64>,
        /// Data-driven shrinkage selection method.
        #[arg(long, value_enum)]
        tune: Option<TuneMethod>,
        /// Bootstrap replicates for --tune bootstrap.
        #[arg(long = "B", default_value_t = 1000)]
        replicates: usize,
        #[arg(long, value_enum, default_value = "median")]
        center: CenterArg,
        /// Jump-truncation multiplier (local standard deviations).
        #[arg(long)]
        truncate: Option<f64>,
        /// Input holds raw prices; take logs on ingest.
        #[arg(long)]
        raw_prices: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Select the shrinkage level without estimating.
    Tune {
        #[arg(long)]
        input: PathBuf,
        #[arg(long = "B", default_value_t = 1000)]
        replicates: usize,
        #[arg(long, value_enum, default_value = "bootstrap")]
        method: TuneMethod,
        /// Monte Carlo draws for the gaussian method.
        #[arg(long, default_value_t = 2000)]
        draws: usize,
        #[arg(long, value_enum, default_value = "median")]
        center: CenterArg,
        #[arg(long)]
        raw_prices: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate spot variance over a local window.
    Spot {
        #[arg(long)]
        input: PathBuf,
        /// Left endpoint of the window, in [0, 1].
        #[arg(long)]
        t: f64,
        /// Window length h.
        #[arg(long)]
        h: f64,
        #[arg(long, conflicts_with = "tune_window")]
        lambda: Option<f64>,
        /// Bootstrap the shrinkage level from the window's own increments.
        #[arg(long)]
        tune_window: bool,
        #[arg(long = "B", default_value_t = 1000)]
        replicates: usize,
        #[arg(long)]
        raw_prices: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Simulate a scenario config to a CSV panel plus ground-truth sidecar.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Sidecar path; defaults to <out>.truth.json.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Monte Carlo study of the factor-model design.
    Mc {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 500)]
        replications: usize,
        #[arg(long = "B", default_value_t = 1000)]
        replicates: usize,
        /// Fixed shrinkage instead of per-replication bootstrap.
        #[arg(long, conflicts_with = "replicates")]
        fixed_lambda: Option<f64>,
        #[arg(long, value_enum, default_value_t = CenterArg::Median)]
        center: CenterArg,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Eigenvalue shares of a panel's realized variance.
    Scree {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        raw_prices: bool,
    },
}

/// Failures mapped onto the CLI exit codes: 1 usage, 2 data, 3 numerical.
#[derive(Debug)]
pub enum AppError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 1,
            AppError::Data(_) => 2,
            AppError::Numerical(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            AppError::Usage(m) | AppError::Data(m) | AppError::Numerical(m) => m,
        }
    }
}

impl From<IoError> for AppError {
    fn from(e: IoError) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<MatrixError> for AppError {
    fn from(e: MatrixError) -> Self {
        match e {
            MatrixError::NotPositiveSemidefinite { .. } | MatrixError::ZeroMatrix => {
                AppError::Numerical(e.to_string())
            }
            _ => AppError::Data(e.to_string()),
        }
    }
}

impl From<EstimatorError> for AppError {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::Matrix(m) => m.into(),
            _ => AppError::Data(e.to_string()),
        }
    }
}

impl From<TuningError> for AppError {
    fn from(e: TuningError) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<SimulatorError> for AppError {
    fn from(e: SimulatorError) -> Self {
        match e {
            SimulatorError::Matrix(m) => m.into(),
            SimulatorError::Panel(p) => p.into(),
            _ => AppError::Data(e.to_string()),
        }
    }
}

impl From<ExperimentError> for AppError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Simulator(s) => s.into(),
            ExperimentError::Tuning(t) => t.into(),
            ExperimentError::Estimator(s) => s.into(),
            ExperimentError::Matrix(m) => m.into(),
            _ => AppError::Data(e.to_string()),
        }
    }
}

fn matrix_rows(m: &SymmetricMatrix) -> Vec<Vec<f64>> {
    let d = m.dim();
    (0..d)
        .map(|i| (0..d).map(|j| m.get(i, j)).collect())
        .collect()
}

#[derive(Serialize)]
struct EstimateReport {
    lambda: f64,
    lambda_source: String,
    rank: usize,
    effective_rank_raw: f64,
    eigenvalues_raw: Vec<f64>,
    eigenvalues_shrunk: Vec<f64>,
    truncated: bool,
    matrix: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct TuneReport {
    method: String,
    lambda_star: f64,
    replicates: usize,
    center: String,
    quantiles: Option<Quantiles>,
    samples: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct SpotReport {
    t: f64,
    h: f64,
    lambda: f64,
    rank: usize,
    outside_guarantee_band: bool,
    matrix: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct SimulateReport {
    scenario: String,
    n: usize,
    d: usize,
    delta: f64,
    panel_path: String,
    truth_path: String,
}

#[derive(Serialize)]
struct ScreeReport {
    trace: f64,
    effective_rank: f64,
    shares: Vec<f64>,
}

fn seed_or_env(seed: Option<u64>) -> u64 {
    seed.or_else(|| {
        std::env::var(SEED_ENV)
            .ok()
            .and_then(|v| v.parse::<u64>().ok())
    })
    .unwrap_or(0)
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serialization")
}

fn load_panel(path: &Path, raw_prices: bool, truncate: Option<f64>) -> Result<crate::ReturnPanel, AppError> {
    let panel = ingest_csv(path, IngestOptions { raw_prices })?;
    match truncate {
        Some(c_mult) => {
            if c_mult <= 0.0 {
                return Err(AppError::Usage(format!(
                    "--truncate must be positive, got {c_mult}"
                )));
            }
            Ok(truncate_returns(&panel, c_mult)?)
        }
        None => Ok(panel),
    }
}

/// Runs one parsed command, returning the report text for standard output.
pub fn dispatch(cli: Cli) -> Result<String, AppError> {
    match cli.command {
        Command::Estimate {
            input,
            lambda,
            tune,
            replicates,
            center,
            truncate,
            raw_prices,
            seed,
        } => {
            let panel = load_panel(&input, raw_prices, truncate)?;
            let (lambda, source) = match (lambda, tune) {
                (Some(l), None) => {
                    if l < 0.0 {
                        return Err(AppError::Usage(format!(
                            "--lambda must be nonnegative, got {l}"
                        )));
                    }
                    (l, "explicit".to_string())
                }
                (None, Some(TuneMethod::Bootstrap)) => {
                    let cfg = BootstrapConfig {
                        replicates,
                        center: center.into(),
                        seed: seed_or_env(seed),
                    };
                    (bootstrap_lambda(&panel, &cfg)?.lambda_star, "bootstrap".to_string())
                }
                (None, Some(TuneMethod::Gaussian)) => {
                    let rv = realized_variance(&panel);
                    (
                        gaussian_lambda_star(&rv, panel.n(), 2000, seed_or_env(seed))?,
                        "gaussian".to_string(),
                    )
                }
                (None, None) => (0.0, "default (no shrinkage)".to_string()),
                (Some(_), Some(_)) => {
                    return Err(AppError::Usage(
                        "--lambda conflicts with --tune".to_string(),
                    ))
                }
            };
            let est = prv(&panel, lambda)?;
            Ok(to_json(&EstimateReport {
                lambda: est.lambda,
                lambda_source: source,
                rank: est.rank,
                effective_rank_raw: est.effective_rank_raw,
                eigenvalues_raw: est.eigenvalues_raw,
                eigenvalues_shrunk: est.eigenvalues_shrunk,
                truncated: truncate.is_some(),
                matrix: matrix_rows(&est.matrix),
            }))
        }
        Command::Tune {
            input,
            replicates,
            method,
            draws,
            center,
            raw_prices,
            seed,
        } => {
            let panel = load_panel(&input, raw_prices, None)?;
            match method {
                TuneMethod::Bootstrap => {
                    let cfg = BootstrapConfig {
                        replicates,
                        center: center.into(),
                        seed: seed_or_env(seed),
                    };
                    let out = bootstrap_lambda(&panel, &cfg)?;
                    Ok(to_json(&TuneReport {
                        method: "bootstrap".to_string(),
                        lambda_star: out.lambda_star,
                        replicates,
                        center: format!("{:?}", cfg.center).to_lowercase(),
                        quantiles: Some(Quantiles::from_samples(&out.samples)),
                        samples: Some(out.samples),
                    }))
                }
                TuneMethod::Gaussian => {
                    let rv = realized_variance(&panel);
                    let lambda_star =
                        gaussian_lambda_star(&rv, panel.n(), draws, seed_or_env(seed))?;
                    Ok(to_json(&TuneReport {
                        method: "gaussian".to_string(),
                        lambda_star,
                        replicates: draws,
                        center: "mean".to_string(),
                        quantiles: None,
                        samples: None,
                    }))
                }
            }
        }
        Command::Spot {
            input,
            t,
            h,
            lambda,
            tune_window,
            replicates,
            raw_prices,
            seed,
        } => {
            let panel = load_panel(&input, raw_prices, None)?;
            let lambda = if tune_window {
                let block = window_panel(&panel, t, h)?;
                let cfg = BootstrapConfig {
                    replicates,
                    center: Center::Median,
                    seed: seed_or_env(seed),
                };
                bootstrap_lambda(&block, &cfg)?.lambda_star
            } else {
                lambda.unwrap_or(0.0)
            };
            let spot = spot_prv(&panel, t, h, lambda)?;
            Ok(to_json(&SpotReport {
                t: spot.t,
                h: spot.window,
                lambda: spot.lambda,
                rank: spot.rank,
                outside_guarantee_band: spot.outside_guarantee_band,
                matrix: matrix_rows(&spot.matrix),
            }))
        }
        Command::Simulate { config, out, truth } => {
            let scenario = load_scenario(&config)?;
            let (sim, name) = match scenario {
                Scenario::FactorModel(cfg) => (simulate_factor_model(&cfg)?, "factor_model"),
                Scenario::Cox(cfg) => (simulate_cox_scenario(&cfg)?, "cox"),
            };
            export_panel_csv(&sim.panel, &out)?;
            let truth_path = truth.unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".truth.json");
                PathBuf::from(p)
            });
            let sidecar = GroundTruth::from_sim(&sim);
            std::fs::write(&truth_path, to_json(&sidecar))
                .map_err(|e| AppError::Data(format!("cannot write sidecar: {e}")))?;
            Ok(to_json(&SimulateReport {
                scenario: name.to_string(),
                n: sim.panel.n(),
                d: sim.panel.dim(),
                delta: sim.panel.delta(),
                panel_path: out.display().to_string(),
                truth_path: truth_path.display().to_string(),
            }))
        }
        Command::Mc {
            config,
            replications,
            replicates,
            fixed_lambda,
            center,
            seed,
        } => {
            let model_cfg = load_factor_model(&config)?;
            let rule = match fixed_lambda {
                Some(lambda) => {
                    if lambda < 0.0 {
                        return Err(AppError::Usage(format!(
                            "--fixed-lambda must be nonnegative, got {lambda}"
                        )));
                    }
                    LambdaRule::Fixed { lambda }
                }
                None => LambdaRule::Bootstrap {
                    replicates,
                    center: center.into(),
                },
            };
            let report = run_monte_carlo(&model_cfg, &rule, replications, seed_or_env(seed))?;
            Ok(to_json(&report))
        }
        Command::Scree { input, raw_prices } => {
            let panel = load_panel(&input, raw_prices, None)?;
            let rv = realized_variance(&panel);
            let shares = scree_stats(&rv)?;
            Ok(to_json(&ScreeReport {
                trace: rv.trace(),
                effective_rank: effective_rank(&rv)?,
                shares,
            }))
        }
    }
}

/// Extracts the increments of the spot window [t, t+h] as their own panel.
fn window_panel(
    panel: &crate::ReturnPanel,
    t: f64,
    h: f64,
) -> Result<crate::ReturnPanel, AppError> {
    let delta = panel.delta();
    if t < 0.0 || t + h > 1.0 + 1e-12 || h <= 0.0 {
        return Err(AppError::Data(format!(
            "spot window [{t}, {}] is outside the unit interval",
            t + h
        )));
    }
    let first = (t / delta).floor() as usize + 1;
    let last = (((t + h) / delta).floor() as usize).min(panel.n());
    if last < first + 1 {
        return Err(AppError::Data(
            "spot window holds fewer than 2 increments".to_string(),
        ));
    }
    let d = panel.dim();
    let block = nalgebra::DMatrix::from_fn(last - first + 1, d, |i, j| {
        panel.increments()[(first - 1 + i, j)]
    });
    Ok(crate::ReturnPanel::new(block, delta)?)
}
