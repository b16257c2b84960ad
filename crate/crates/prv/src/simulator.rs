//! Synthetic high-frequency panels with known ground truth: a three-factor
//! stochastic-volatility model and a piecewise-constant (regime-switching)
//! volatility scenario driven by a Poisson/Cox switch process.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{EstimatorError, ReturnPanel};
use crate::matrix::{MatrixError, SymmetricMatrix};

#[derive(Debug, Error)]
pub enum SimulatorError {
    #[error("config field {field} must be positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },

    #[error("factor correlation must be a symmetric PSD matrix with unit diagonal")]
    BadFactorCorrelation,

    #[error("vector field {field} must have length {expected}, got {actual}")]
    BadLength {
        field: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("need at least 2 observations, got {0}")]
    TooFewObservations(usize),

    #[error("regime list must be non-empty and all matrices {0}x{0} PSD")]
    BadRegimes(usize),

    #[error("switch times must be strictly increasing inside (0, 1)")]
    BadSwitchTimes,

    #[error(transparent)]
    Matrix(#[from] MatrixError),

    #[error(transparent)]
    Panel(#[from] EstimatorError),
}

/// Configuration of the three-factor model: factors with square-root
/// stochastic variances and leverage, plus square-root idiosyncratic
/// variances per asset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FactorModelConfig {
    pub d: usize,
    pub r: usize,
    pub alpha: Vec<f64>,
    pub kappa: Vec<f64>,
    pub theta: Vec<f64>,
    pub eta: Vec<f64>,
    pub rho_lev: Vec<f64>,
    pub factor_corr: Vec<Vec<f64>>,
    pub kappa_z: f64,
    pub theta_z: f64,
    pub eta_z: f64,
    pub beta_market_range: (f64, f64),
    pub beta_other_sd: f64,
    pub n_obs: usize,
    /// Euler substeps per observation interval.
    pub substeps: usize,
    pub seed: u64,
    /// Starting factor variances; defaults to theta (stationary means).
    pub initial_factor_var: Option<Vec<f64>>,
    /// Starting idiosyncratic variances; defaults to theta_z.
    pub initial_idio_var: Option<f64>,
    /// Fixed loadings matrix (row-major, d rows of r); when absent the
    /// loadings are drawn at random per the configured distributions.
    pub loadings_override: Option<Vec<Vec<f64>>>,
}

impl Default for FactorModelConfig {
    fn default() -> Self {
        Self {
            d: 30,
            r: 3,
            alpha: vec![0.05, 0.03, 0.02],
            kappa: vec![3.0, 4.0, 5.0],
            theta: vec![0.05, 0.04, 0.03],
            eta: vec![0.3, 0.4, 0.3],
            rho_lev: vec![-0.60, -0.40, -0.25],
            factor_corr: vec![
                vec![1.00, 0.05, 0.10],
                vec![0.05, 1.00, 0.15],
                vec![0.10, 0.15, 1.00],
            ],
            kappa_z: 4.0,
            theta_z: 0.25,
            eta_z: 0.06,
            beta_market_range: (0.25, 1.75),
            beta_other_sd: 0.5,
            n_obs: 78,
            substeps: 10,
            seed: 0,
            initial_factor_var: None,
            initial_idio_var: None,
            loadings_override: None,
        }
    }
}

impl FactorModelConfig {
    pub fn validate(&self) -> Result<(), SimulatorError> {
        if self.n_obs < 2 {
            return Err(SimulatorError::TooFewObservations(self.n_obs));
        }
        for (field, v) in [
            ("kappa_z", self.kappa_z),
            ("theta_z", self.theta_z),
            ("substeps", self.substeps as f64),
            ("d", self.d as f64),
            ("r", self.r as f64),
        ] {
            if v <= 0.0 {
                return Err(SimulatorError::NonPositive { field, value: v });
            }
        }
        if self.eta_z < 0.0 {
            return Err(SimulatorError::NonPositive {
                field: "eta_z",
                value: self.eta_z,
            });
        }
        for (field, vec) in [
            ("alpha", &self.alpha),
            ("kappa", &self.kappa),
            ("theta", &self.theta),
            ("eta", &self.eta),
            ("rho_lev", &self.rho_lev),
        ] {
            if vec.len() != self.r {
                return Err(SimulatorError::BadLength {
                    field,
                    expected: self.r,
                    actual: vec.len(),
                });
            }
        }
        for j in 0..self.r {
            if self.kappa[j] <= 0.0 || self.theta[j] <= 0.0 || self.eta[j] < 0.0 {
                return Err(SimulatorError::NonPositive {
                    field: "kappa/theta/eta",
                    value: self.kappa[j].min(self.theta[j]).min(self.eta[j]),
                });
            }
            if self.rho_lev[j].abs() > 1.0 {
                return Err(SimulatorError::NonPositive {
                    field: "rho_lev out of [-1,1]",
                    value: self.rho_lev[j],
                });
            }
        }
        let corr = self.factor_corr_matrix()?;
        let es = crate::matrix::eigen_sym(&corr);
        for k in 0..self.r {
            if (corr.get(k, k) - 1.0).abs() > 1e-12 {
                return Err(SimulatorError::BadFactorCorrelation);
            }
        }
        if es.eigenvalues.last().copied().unwrap_or(-1.0) < -1e-10 {
            return Err(SimulatorError::BadFactorCorrelation);
        }
        Ok(())
    }

    pub fn factor_corr_matrix(&self) -> Result<SymmetricMatrix, SimulatorError> {
        if self.factor_corr.len() != self.r
            || self.factor_corr.iter().any(|row| row.len() != self.r)
        {
            return Err(SimulatorError::BadFactorCorrelation);
        }
        Ok(SymmetricMatrix::from_rows(&self.factor_corr)?)
    }

    /// Whether 2κθ ≥ η² holds for each factor (reported, not enforced).
    pub fn feller_condition(&self) -> Vec<bool> {
        (0..self.r)
            .map(|j| 2.0 * self.kappa[j] * self.theta[j] >= self.eta[j] * self.eta[j])
            .collect()
    }
}

/// Simulated panel plus ground truth.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub panel: ReturnPanel,
    /// Spot variance on the fine simulation grid (left endpoints).
    pub spot_path: Vec<SymmetricMatrix>,
    /// Times of the fine-grid points.
    pub spot_times: Vec<f64>,
    /// Integrated variance ∫c_t dt (left-endpoint Riemann sum; exact for
    /// piecewise-constant scenarios).
    pub qv_true: SymmetricMatrix,
    /// Factor loadings, when the scenario has them.
    pub loadings: Option<DMatrix<f64>>,
}

impl SimOutput {
    /// Spot variance at time t (left-limit convention on the fine grid).
    pub fn spot_at(&self, t: f64) -> &SymmetricMatrix {
        let mut idx = 0;
        for (k, &s) in self.spot_times.iter().enumerate() {
            if s <= t {
                idx = k;
            } else {
                break;
            }
        }
        &self.spot_path[idx]
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives an independent 64-bit seed from (seed, index); splitmix64 finalizer.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9e3779b97f4a7c15)
        .wrapping_add(index.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Draws the loadings matrix: market column U(a, b), remaining columns
/// centered Gaussian with the configured standard deviation.
pub fn draw_loadings(cfg: &FactorModelConfig, rng: &mut impl Rng) -> DMatrix<f64> {
    let (lo, hi) = cfg.beta_market_range;
    DMatrix::from_fn(cfg.d, cfg.r, |_, j| {
        if j == 0 {
            rng.gen_range(lo..hi)
        } else {
            cfg.beta_other_sd * rng.sample::<f64, _>(StandardNormal)
        }
    })
}

/// Brownian increments on the fine grid, already scaled by √dt.
pub struct NoisePath {
    /// steps × r: factor Brownian motion W.
    pub factor: DMatrix<f64>,
    /// steps × r: independent W̃ for the leverage decomposition.
    pub factor_vol: DMatrix<f64>,
    /// steps × d: asset-level B.
    pub idio: DMatrix<f64>,
    /// steps × d: B̃ driving the idiosyncratic variances.
    pub idio_vol: DMatrix<f64>,
}

impl NoisePath {
    pub fn sample(cfg: &FactorModelConfig, seed: u64) -> Self {
        let steps = cfg.n_obs * cfg.substeps;
        let dt_sqrt = (1.0 / steps as f64).sqrt();
        let fill = |stream: u64, cols: usize| {
            let mut rng = stream_rng(seed, stream);
            DMatrix::from_fn(steps, cols, |_, _| {
                dt_sqrt * rng.sample::<f64, _>(StandardNormal)
            })
        };
        Self {
            factor: fill(1, cfg.r),
            factor_vol: fill(2, cfg.r),
            idio: fill(3, cfg.d),
            idio_vol: fill(4, cfg.d),
        }
    }

    /// Sums consecutive groups of rows, coarsening the grid by `factor`.
    pub fn coarsen(&self, factor: usize) -> Self {
        let agg = |m: &DMatrix<f64>| {
            let steps = m.nrows() / factor;
            DMatrix::from_fn(steps, m.ncols(), |i, j| {
                (0..factor).map(|k| m[(i * factor + k, j)]).sum()
            })
        };
        Self {
            factor: agg(&self.factor),
            factor_vol: agg(&self.factor_vol),
            idio: agg(&self.idio),
            idio_vol: agg(&self.idio_vol),
        }
    }
}

/// Euler path simulation with supplied loadings and Brownian increments.
/// Square-root processes use full truncation: drift and diffusion are
/// evaluated at max(v, 0).
pub fn simulate_factor_model_with_noise(
    cfg: &FactorModelConfig,
    loadings: &DMatrix<f64>,
    noise: &NoisePath,
) -> Result<SimOutput, SimulatorError> {
    cfg.validate()?;
    let d = cfg.d;
    let r = cfg.r;
    let steps = noise.factor.nrows();
    let substeps = steps / cfg.n_obs;
    let dt = 1.0 / steps as f64;
    let corr = cfg.factor_corr_matrix()?;
    let chol = corr
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or(SimulatorError::BadFactorCorrelation)?;
    let l = chol.l();

    let mut sig2: Vec<f64> = cfg
        .initial_factor_var
        .clone()
        .unwrap_or_else(|| cfg.theta.clone());
    if sig2.len() != r {
        return Err(SimulatorError::BadLength {
            field: "initial_factor_var",
            expected: r,
            actual: sig2.len(),
        });
    }
    let mut gam2: Vec<f64> = vec![cfg.initial_idio_var.unwrap_or(cfg.theta_z); d];

    let alpha = DVector::from_vec(cfg.alpha.clone());
    let mut spot_path = Vec::with_capacity(steps);
    let mut spot_times = Vec::with_capacity(steps);
    let mut qv = DMatrix::<f64>::zeros(d, d);
    let mut increments = DMatrix::<f64>::zeros(cfg.n_obs, d);

    for step in 0..steps {
        let t = step as f64 * dt;
        let v: Vec<f64> = sig2.iter().map(|x| x.max(0.0)).collect();
        let g: Vec<f64> = gam2.iter().map(|x| x.max(0.0)).collect();

        // Spot variance at the step's left endpoint:
        // c = β σ ρ σ βᵀ + diag(g), σ = diag(√v).
        let sigma = DMatrix::from_fn(r, r, |i, j| {
            if i == j {
                v[i].sqrt()
            } else {
                0.0
            }
        });
        let middle = &sigma * corr.as_matrix() * &sigma;
        let mut c = loadings * middle * loadings.transpose();
        for j in 0..d {
            c[(j, j)] += g[j];
        }
        let spot = SymmetricMatrix::new(c.clone())?;
        qv += c * dt;
        spot_path.push(spot);
        spot_times.push(t);

        // Factor increment dF = α dt + σ L dW.
        let dw: DVector<f64> = DVector::from_fn(r, |j, _| noise.factor[(step, j)]);
        let df = &alpha * dt + &sigma * &l * &dw;

        // Asset increment dY = β dF + √g dB.
        let obs = step / substeps;
        for j in 0..d {
            let mut dy = 0.0;
            for k in 0..r {
                dy += loadings[(j, k)] * df[k];
            }
            dy += g[j].sqrt() * noise.idio[(step, j)];
            increments[(obs, j)] += dy;
        }

        // Variance updates (full truncation).
        for j in 0..r {
            let shock = cfg.rho_lev[j] * noise.factor[(step, j)]
                + (1.0 - cfg.rho_lev[j] * cfg.rho_lev[j]).sqrt() * noise.factor_vol[(step, j)];
            sig2[j] += cfg.kappa[j] * (cfg.theta[j] - v[j]) * dt + cfg.eta[j] * v[j].sqrt() * shock;
        }
        for j in 0..d {
            gam2[j] += cfg.kappa_z * (cfg.theta_z - g[j]) * dt
                + cfg.eta_z * g[j].sqrt() * noise.idio_vol[(step, j)];
        }
    }

    Ok(SimOutput {
        panel: ReturnPanel::from_increments(increments)?,
        spot_path,
        spot_times,
        qv_true: SymmetricMatrix::new(qv)?,
        loadings: Some(loadings.clone()),
    })
}

/// Simulates the factor model from its seed: loadings first (own RNG
/// stream), then the Euler path.
pub fn simulate_factor_model(cfg: &FactorModelConfig) -> Result<SimOutput, SimulatorError> {
    cfg.validate()?;
    let loadings = match &cfg.loadings_override {
        Some(rows) => {
            if rows.len() != cfg.d || rows.iter().any(|row| row.len() != cfg.r) {
                return Err(SimulatorError::BadLength {
                    field: "loadings_override",
                    expected: cfg.d,
                    actual: rows.len(),
                });
            }
            DMatrix::from_fn(cfg.d, cfg.r, |i, j| rows[i][j])
        }
        None => draw_loadings(cfg, &mut stream_rng(cfg.seed, 0)),
    };
    let noise = NoisePath::sample(cfg, cfg.seed);
    simulate_factor_model_with_noise(cfg, &loadings, &noise)
}

/// How regime switches arrive in the piecewise-constant scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchProcess {
    /// Poisson arrivals with the given constant intensity.
    Poisson { intensity: f64 },
    /// Fixed switch times in (0, 1), strictly increasing.
    Deterministic { times: Vec<f64> },
}

/// Piecewise-constant volatility scenario: c_s = C_{N_{s-}} with N driven
/// by the switch process, regimes drawn from a fixed list (clamped at the
/// last entry once exhausted).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoxScenarioConfig {
    pub d: usize,
    /// Regime covariance matrices C_0, C_1, … as row-major d×d entries.
    pub regime_matrices: Vec<Vec<Vec<f64>>>,
    pub switching: SwitchProcess,
    pub n_obs: usize,
    pub seed: u64,
}

impl CoxScenarioConfig {
    fn regimes(&self) -> Result<Vec<SymmetricMatrix>, SimulatorError> {
        if self.regime_matrices.is_empty() {
            return Err(SimulatorError::BadRegimes(self.d));
        }
        let mut out = Vec::with_capacity(self.regime_matrices.len());
        for rows in &self.regime_matrices {
            if rows.len() != self.d || rows.iter().any(|r| r.len() != self.d) {
                return Err(SimulatorError::BadRegimes(self.d));
            }
            let m = SymmetricMatrix::from_rows(rows)?;
            let es = crate::matrix::eigen_sym(&m);
            if es.eigenvalues.last().copied().unwrap_or(0.0) < -1e-10 * es.spectral_norm() {
                return Err(SimulatorError::BadRegimes(self.d));
            }
            out.push(m);
        }
        Ok(out)
    }

    fn switch_times(&self, rng: &mut impl Rng) -> Result<Vec<f64>, SimulatorError> {
        match &self.switching {
            SwitchProcess::Deterministic { times } => {
                let mut prev = 0.0;
                for &t in times {
                    if !(t > prev && t < 1.0) {
                        return Err(SimulatorError::BadSwitchTimes);
                    }
                    prev = t;
                }
                Ok(times.clone())
            }
            SwitchProcess::Poisson { intensity } => {
                if *intensity < 0.0 {
                    return Err(SimulatorError::NonPositive {
                        field: "intensity",
                        value: *intensity,
                    });
                }
                let mut times = Vec::new();
                if *intensity > 0.0 {
                    let mut t = 0.0;
                    loop {
                        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                        t -= u.ln() / intensity;
                        if t >= 1.0 {
                            break;
                        }
                        times.push(t);
                    }
                }
                Ok(times)
            }
        }
    }
}

/// Simulates the regime-switching scenario. Increments are driftless
/// Gaussians whose covariance aggregates the active regimes over each
/// observation interval; ground truth is exact.
pub fn simulate_cox_scenario(cfg: &CoxScenarioConfig) -> Result<SimOutput, SimulatorError> {
    if cfg.n_obs < 2 {
        return Err(SimulatorError::TooFewObservations(cfg.n_obs));
    }
    let regimes = cfg.regimes()?;
    let mut rng = stream_rng(cfg.seed, 0);
    let switch_times = cfg.switch_times(&mut rng)?;
    let regime_at = |t: f64| -> &SymmetricMatrix {
        let jumps = switch_times.iter().filter(|&&s| s <= t).count();
        &regimes[jumps.min(regimes.len() - 1)]
    };

    let d = cfg.d;
    let n = cfg.n_obs;
    let delta = 1.0 / n as f64;
    let mut qv = DMatrix::<f64>::zeros(d, d);
    let mut increments = DMatrix::<f64>::zeros(n, d);
    let mut noise_rng = stream_rng(cfg.seed, 1);

    for k in 0..n {
        let (t0, t1) = (k as f64 * delta, (k + 1) as f64 * delta);
        // Exact covariance of the increment: Σ over constant pieces.
        let mut cov = DMatrix::<f64>::zeros(d, d);
        let mut boundaries = vec![t0];
        boundaries.extend(switch_times.iter().copied().filter(|&s| s > t0 && s < t1));
        boundaries.push(t1);
        for w in boundaries.windows(2) {
            cov += regime_at(w[0]).as_matrix() * (w[1] - w[0]);
        }
        qv += &cov;
        let root = spectral_sqrt_raw(&cov);
        let g = DVector::from_fn(d, |_, _| noise_rng.sample::<f64, _>(StandardNormal));
        let inc = root * g;
        for j in 0..d {
            increments[(k, j)] = inc[j];
        }
    }

    let spot_times: Vec<f64> = (0..n).map(|k| k as f64 * delta).collect();
    let spot_path: Vec<SymmetricMatrix> = spot_times.iter().map(|&t| regime_at(t).clone()).collect();

    Ok(SimOutput {
        panel: ReturnPanel::from_increments(increments)?,
        spot_path,
        spot_times,
        qv_true: SymmetricMatrix::new(qv)?,
        loadings: None,
    })
}

fn spectral_sqrt_raw(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = SymmetricMatrix::new(m.clone()).expect("finite covariance");
    let es = crate::matrix::eigen_sym(&sym);
    let roots: Vec<f64> = es.eigenvalues.iter().map(|s| s.max(0.0).sqrt()).collect();
    &es.eigenvectors
        * DMatrix::from_diagonal(&DVector::from_vec(roots))
        * es.eigenvectors.transpose()
}
