//! Monte Carlo harness and report statistics: rank histograms, shrinkage
//! distributions, estimation-error comparisons and eigenvalue scree shares.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{prv, realized_variance, EstimatorError, ReturnPanel};
use crate::matrix::{eigen_sym, MatrixError, SymmetricMatrix};
use crate::simulator::{derive_seed, simulate_factor_model, FactorModelConfig, SimulatorError};
use crate::tuning::{bootstrap_lambda, gaussian_lambda_star, BootstrapConfig, Center, TuningError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("need at least one replication")]
    NoReplications,

    #[error("matrix has non-positive trace; scree shares undefined")]
    DegenerateTrace,

    #[error(transparent)]
    Simulator(#[from] SimulatorError),

    #[error(transparent)]
    Tuning(#[from] TuningError),

    #[error(transparent)]
    Estimator(#[from] EstimatorError),

    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// How the shrinkage level is chosen in each replication.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    Fixed { lambda: f64 },
    Bootstrap {
        replicates: usize,
        #[serde(default)]
        center: Center,
    },
    /// Stylized Gaussian approximation of the bootstrap.
    Gaussian { draws: usize },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Quantiles {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    pub mean: f64,
}

impl Quantiles {
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut sorted = samples.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
        let q = |p: f64| -> f64 {
            let idx = p * (sorted.len() - 1) as f64;
            let lo = idx.floor() as usize;
            let hi = idx.ceil() as usize;
            let w = idx - lo as f64;
            sorted[lo] * (1.0 - w) + sorted[hi] * w
        };
        Self {
            min: sorted[0],
            q25: q(0.25),
            median: q(0.5),
            q75: q(0.75),
            max: *sorted.last().expect("non-empty samples"),
            mean: samples.iter().sum::<f64>() / samples.len() as f64,
        }
    }
}

/// Aggregated Monte Carlo statistics.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct McReport {
    pub replications: usize,
    /// Detected PRV rank → relative frequency (sums to 1).
    pub rank_histogram: BTreeMap<usize, f64>,
    pub mean_rank: f64,
    /// Shrinkage level across replications, absolute units.
    pub lambda_abs: Quantiles,
    /// Shrinkage level as a fraction of the top RV eigenvalue.
    pub lambda_frac_top: Quantiles,
    /// Per-replication Frobenius errors of PRV and raw RV vs the true QV.
    pub error_prv: Vec<f64>,
    pub error_rv: Vec<f64>,
    /// Average eigenvalue shares of the RV spectrum.
    pub scree_mean: Vec<f64>,
}

struct Replication {
    rank: usize,
    lambda: f64,
    lambda_frac: f64,
    error_prv: f64,
    error_rv: f64,
    scree: Vec<f64>,
}

fn run_one(
    model_cfg: &FactorModelConfig,
    rule: &LambdaRule,
    rep_seed: u64,
) -> Result<Replication, ExperimentError> {
    let cfg = FactorModelConfig {
        seed: rep_seed,
        ..model_cfg.clone()
    };
    let sim = simulate_factor_model(&cfg)?;
    let rv = realized_variance(&sim.panel);
    let lambda = match rule {
        LambdaRule::Fixed { lambda } => *lambda,
        LambdaRule::Bootstrap { replicates, center } => {
            let boot_cfg = BootstrapConfig {
                replicates: *replicates,
                center: *center,
                seed: derive_seed(rep_seed, 0x626f6f74),
            };
            bootstrap_lambda(&sim.panel, &boot_cfg)?.lambda_star
        }
        LambdaRule::Gaussian { draws } => gaussian_lambda_star(
            &rv,
            sim.panel.n(),
            *draws,
            derive_seed(rep_seed, 0x67617573),
        )?,
    };
    let est = prv(&sim.panel, lambda)?;
    let top = est.eigenvalues_raw.first().copied().unwrap_or(0.0);
    Ok(Replication {
        rank: est.rank,
        lambda,
        lambda_frac: if top > 0.0 { lambda / top } else { 0.0 },
        error_prv: est.matrix.frobenius_distance(&sim.qv_true),
        error_rv: rv.frobenius_distance(&sim.qv_true),
        scree: scree_stats(&rv)?,
    })
}

/// Runs independent replications of the factor-model design: simulate,
/// select λ, estimate, record rank and errors. Deterministic given the seed
/// and independent of execution order.
pub fn run_monte_carlo(
    model_cfg: &FactorModelConfig,
    rule: &LambdaRule,
    replications: usize,
    seed: u64,
) -> Result<McReport, ExperimentError> {
    if replications == 0 {
        return Err(ExperimentError::NoReplications);
    }
    model_cfg.validate()?;
    let results: Vec<Result<Replication, ExperimentError>> = (0..replications as u64)
        .into_par_iter()
        .map(|rep| run_one(model_cfg, rule, derive_seed(seed, rep)))
        .collect();
    let mut reps = Vec::with_capacity(replications);
    for r in results {
        reps.push(r?);
    }

    let mut rank_histogram = BTreeMap::new();
    for r in &reps {
        *rank_histogram.entry(r.rank).or_insert(0.0) += 1.0 / replications as f64;
    }
    let mean_rank = rank_histogram
        .iter()
        .map(|(rank, freq)| *rank as f64 * freq)
        .sum();
    let lambdas: Vec<f64> = reps.iter().map(|r| r.lambda).collect();
    let fracs: Vec<f64> = reps.iter().map(|r| r.lambda_frac).collect();
    let d = reps[0].scree.len();
    let scree_mean: Vec<f64> = (0..d)
        .map(|k| reps.iter().map(|r| r.scree[k]).sum::<f64>() / replications as f64)
        .collect();
    Ok(McReport {
        replications,
        rank_histogram,
        mean_rank,
        lambda_abs: Quantiles::from_samples(&lambdas),
        lambda_frac_top: Quantiles::from_samples(&fracs),
        error_prv: reps.iter().map(|r| r.error_prv).collect(),
        error_rv: reps.iter().map(|r| r.error_rv).collect(),
        scree_mean,
    })
}

/// Proportion of total variance (trace) explained by each eigenvalue,
/// in descending order. Sums to 1.
pub fn scree_stats(matrix: &SymmetricMatrix) -> Result<Vec<f64>, ExperimentError> {
    let es = eigen_sym(matrix);
    let clamped: Vec<f64> = es.eigenvalues.iter().map(|s| s.max(0.0)).collect();
    let trace: f64 = clamped.iter().sum();
    if trace <= 0.0 {
        return Err(ExperimentError::DegenerateTrace);
    }
    Ok(clamped.iter().map(|s| s / trace).collect())
}

/// One row of the rate-scaling table.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub mean_sq_error: f64,
}

/// Mean squared Frobenius error of the PRV against a known constant spot
/// variance, per sample size, with λ = coeff·√Δ_n.
pub fn rate_check(
    spot_variance: &SymmetricMatrix,
    n_list: &[usize],
    replications: usize,
    lambda_coeff: f64,
    seed: u64,
) -> Result<Vec<RatePoint>, ExperimentError> {
    if replications == 0 {
        return Err(ExperimentError::NoReplications);
    }
    let d = spot_variance.dim();
    let es = eigen_sym(spot_variance);
    let roots: Vec<f64> = es.eigenvalues.iter().map(|s| s.max(0.0).sqrt()).collect();
    let root = &es.eigenvectors
        * DMatrix::from_diagonal(&DVector::from_vec(roots))
        * es.eigenvectors.transpose();

    let mut out = Vec::with_capacity(n_list.len());
    for (ni, &n) in n_list.iter().enumerate() {
        let delta = 1.0 / n as f64;
        let lambda = lambda_coeff * delta.sqrt();
        let scale = delta.sqrt();
        let total: f64 = (0..replications as u64)
            .into_par_iter()
            .map(|rep| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(seed, (ni as u64) << 32 | rep));
                let gauss =
                    DMatrix::from_fn(n, d, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
                let increments = gauss * &root;
                // All-zero volatility produces an all-zero panel; its RV and
                // PRV are exactly zero, matching the zero truth.
                let panel = ReturnPanel::from_increments(increments).expect("valid panel");
                let est = prv(&panel, lambda).expect("PSD realized variance");
                let err = est.matrix.frobenius_distance(spot_variance);
                err * err
            })
            .sum();
        out.push(RatePoint {
            n,
            mean_sq_error: total / replications as f64,
        });
    }
    Ok(out)
}
