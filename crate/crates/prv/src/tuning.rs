//! Shrinkage-parameter selection: i.i.d. bootstrap, Gaussian stylized
//! approximation, and the theoretical plug-in formula.

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::estimators::{realized_variance, ReturnPanel};
use crate::matrix::{eigen_sym, SymmetricMatrix};

#[derive(Debug, Error)]
pub enum TuningError {
    #[error("bootstrap needs at least one replicate")]
    NoReplicates,

    #[error("panel is degenerate (all increments zero); shrinkage selection is meaningless")]
    DegeneratePanel,

    #[error("volatility bounds must satisfy 0 < nu_c_inf <= nu_c2, got nu_c2={nu_c2}, nu_c_inf={nu_c_inf}")]
    BadVolBounds { nu_c2: f64, nu_c_inf: f64 },

    #[error("sampling interval must lie in (0, 1), got {0}")]
    BadDelta(f64),

    #[error("need n >= 2 and draws >= 1")]
    BadMonteCarloSetup,
}

/// Central-tendency statistic applied to the bootstrap replicates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Center {
    #[default]
    Median,
    Mean,
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct BootstrapConfig {
    /// Number of bootstrap replicates.
    pub replicates: usize,
    pub center: Center,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 10_000,
            center: Center::Median,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BootstrapResult {
    pub lambda_star: f64,
    /// The individual replicate values λ(b), in replicate order.
    pub samples: Vec<f64>,
}

/// RNG stream for replicate `index`, derived independently from the seed so
/// replicates can run in parallel and still be reproducible.
fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}

fn spectral_norm_of_difference(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = SymmetricMatrix::new(a - b).expect("difference of symmetric matrices");
    eigen_sym(&diff)
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
}

fn center_of(samples: &[f64], center: Center) -> f64 {
    match center {
        Center::Mean => samples.iter().sum::<f64>() / samples.len() as f64,
        Center::Median => {
            let mut sorted = samples.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite lambda samples"));
            let mid = sorted.len() / 2;
            if sorted.len() % 2 == 1 {
                sorted[mid]
            } else {
                0.5 * (sorted[mid - 1] + sorted[mid])
            }
        }
    }
}

/// Resampled realized variance for one bootstrap replicate: draw counts of a
/// same-size i.i.d. resample and form the count-weighted outer-product sum.
fn bootstrap_rv(panel: &ReturnPanel, rng: &mut impl Rng) -> DMatrix<f64> {
    let n = panel.n();
    let d = panel.dim();
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.gen_range(0..n)] += 1;
    }
    // Σ_k m_k r_k r_kᵀ = Yᵀ Y with Y the √m_k-scaled selected rows.
    let selected: Vec<usize> = (0..n).filter(|&k| counts[k] > 0).collect();
    let mut scaled = DMatrix::zeros(selected.len(), d);
    for (row, &k) in selected.iter().enumerate() {
        let w = (counts[k] as f64).sqrt();
        for j in 0..d {
            scaled[(row, j)] = w * panel.increments()[(k, j)];
        }
    }
    scaled.transpose() * scaled
}

/// Bootstrap selection of λ: each replicate resamples the increments with
/// replacement and records twice the spectral norm of the RV deviation.
pub fn bootstrap_lambda(
    panel: &ReturnPanel,
    cfg: &BootstrapConfig,
) -> Result<BootstrapResult, TuningError> {
    if cfg.replicates == 0 {
        return Err(TuningError::NoReplicates);
    }
    if panel.increments().iter().all(|v| *v == 0.0) {
        return Err(TuningError::DegeneratePanel);
    }
    let rv = realized_variance(panel);
    let samples: Vec<f64> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = replicate_rng(cfg.seed, b);
            let rv_b = bootstrap_rv(panel, &mut rng);
            2.0 * spectral_norm_of_difference(&rv_b, rv.as_matrix())
        })
        .collect();
    Ok(BootstrapResult {
        lambda_star: center_of(&samples, cfg.center),
        samples,
    })
}

/// Spectral square root U √Λ Uᵀ of a PSD matrix, with small negative
/// eigenvalues clamped to zero.
fn spectral_sqrt(m: &SymmetricMatrix) -> DMatrix<f64> {
    let es = eigen_sym(m);
    let roots: Vec<f64> = es.eigenvalues.iter().map(|s| s.max(0.0).sqrt()).collect();
    &es.eigenvectors
        * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(roots))
        * es.eigenvectors.transpose()
}

/// Monte Carlo estimate of the stylized shrinkage level
/// 2·E‖Σ_k Z_k Z_kᵀ − Σ̂‖_∞ with Z_k i.i.d. N(0, Σ̂/n).
pub fn gaussian_lambda_star(
    rv: &SymmetricMatrix,
    n: usize,
    draws: usize,
    seed: u64,
) -> Result<f64, TuningError> {
    if n < 2 || draws == 0 {
        return Err(TuningError::BadMonteCarloSetup);
    }
    let d = rv.dim();
    let root = spectral_sqrt(rv) / (n as f64).sqrt();
    let total: f64 = (0..draws as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = replicate_rng(seed, b);
            let gaussians = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let z = gaussians * &root; // rows are Z_kᵀ
            let wishart = z.transpose() * z;
            2.0 * spectral_norm_of_difference(&wishart, rv.as_matrix())
        })
        .sum();
    Ok(total / draws as f64)
}

/// Almost-sure bounds on the spot variance path, plus the absolute-constant
/// stand-in for the theoretical λ formula.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct VolBounds {
    /// Bound on sup tr(c_t).
    pub nu_c2: f64,
    /// Bound on sup ‖c_t‖_∞.
    pub nu_c_inf: f64,
    /// Absolute constant; the theory does not pin its value, so it must be
    /// supplied by the user (default 1.0 makes the output diagnostic only).
    pub gamma: f64,
}

impl VolBounds {
    pub fn validate(&self) -> Result<(), TuningError> {
        if !(self.nu_c_inf > 0.0 && self.nu_c_inf <= self.nu_c2) {
            return Err(TuningError::BadVolBounds {
                nu_c2: self.nu_c2,
                nu_c_inf: self.nu_c_inf,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TheoreticalLambda {
    pub lambda: f64,
    /// False when Δ_n⁻¹ < 2·(ν_{c,2}/ν_{c,∞})·log(d), in which case the
    /// formula sits outside its guaranteed regime.
    pub sampling_condition_met: bool,
}

/// Theoretical shrinkage level γ·sqrt(ν_{c,2}·ν_{c,∞}·Δ_n·log(d)).
pub fn theoretical_lambda(
    bounds: &VolBounds,
    delta: f64,
    d: usize,
) -> Result<TheoreticalLambda, TuningError> {
    bounds.validate()?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(TuningError::BadDelta(delta));
    }
    let log_d = (d as f64).ln();
    let lambda = bounds.gamma * (bounds.nu_c2 * bounds.nu_c_inf * delta * log_d).sqrt();
    let sampling_condition_met = 1.0 / delta >= 2.0 * (bounds.nu_c2 / bounds.nu_c_inf) * log_d;
    Ok(TheoreticalLambda {
        lambda,
        sampling_condition_met,
    })
}
