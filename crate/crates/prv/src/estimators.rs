//! Realized variance, penalized realized variance (PRV), spot-variance
//! estimation, jump truncation, and per-asset diagnostics.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::matrix::{
    eigen_sym, rank_eps, soft_threshold_eigen, MatrixError, SymmetricMatrix, RANK_TINY,
};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("panel must have at least {required} increments, got {actual}")]
    InsufficientData { required: usize, actual: usize },

    #[error("panel contains a non-finite increment at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("panel needs at least 2 assets, got {0}")]
    TooFewAssets(usize),

    #[error("sampling interval must lie in (0, 1), got {0}")]
    BadDelta(f64),

    #[error("spot window [{t}, {t_end}] is outside the unit interval")]
    WindowOutOfRange { t: f64, t_end: f64 },

    #[error("spot block holds {0} increments; at least 2 are required")]
    WindowTooShort(usize),

    #[error("market column has zero realized variance")]
    DegenerateMarket,

    #[error("asset index {0} out of range for {1} assets")]
    BadAssetIndex(usize, usize),

    #[error("asset and market indices must differ")]
    AssetEqualsMarket,

    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Panel of equidistant log-return increments over a window normalized
/// to [0, 1]. Row k holds the d increments over ((k-1)Δ, kΔ].
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    increments: DMatrix<f64>,
    delta: f64,
}

impl ReturnPanel {
    pub fn new(increments: DMatrix<f64>, delta: f64) -> Result<Self, EstimatorError> {
        let (n, d) = increments.shape();
        if n < 2 {
            return Err(EstimatorError::InsufficientData {
                required: 2,
                actual: n,
            });
        }
        if d < 2 {
            return Err(EstimatorError::TooFewAssets(d));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(EstimatorError::BadDelta(delta));
        }
        for i in 0..n {
            for j in 0..d {
                if !increments[(i, j)].is_finite() {
                    return Err(EstimatorError::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(Self { increments, delta })
    }

    /// Builds a panel covering the full window, so delta = 1/n.
    pub fn from_increments(increments: DMatrix<f64>) -> Result<Self, EstimatorError> {
        let n = increments.nrows();
        if n < 2 {
            return Err(EstimatorError::InsufficientData {
                required: 2,
                actual: n,
            });
        }
        Self::new(increments, 1.0 / n as f64)
    }

    pub fn n(&self) -> usize {
        self.increments.nrows()
    }

    pub fn dim(&self) -> usize {
        self.increments.ncols()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn increments(&self) -> &DMatrix<f64> {
        &self.increments
    }

    pub fn row(&self, k: usize) -> Vec<f64> {
        self.increments.row(k).iter().copied().collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.increments.column(j).iter().copied().collect()
    }
}

/// Penalized realized variance together with its spectral bookkeeping.
#[derive(Debug, Clone)]
pub struct PrvEstimate {
    pub matrix: SymmetricMatrix,
    pub lambda: f64,
    pub eigenvalues_raw: Vec<f64>,
    pub eigenvalues_shrunk: Vec<f64>,
    pub rank: usize,
    pub effective_rank_raw: f64,
}

/// Spot variance estimate over the block [t, t + window].
#[derive(Debug, Clone)]
pub struct SpotEstimate {
    pub t: f64,
    pub window: f64,
    pub matrix: SymmetricMatrix,
    pub lambda: f64,
    pub rank: usize,
    /// True when t falls outside [h/2, 1 - 3h/2], the band where the
    /// non-asymptotic guarantees apply.
    pub outside_guarantee_band: bool,
}

/// Realized variance Σ_k (Δ_k Y)(Δ_k Y)ᵀ.
pub fn realized_variance(panel: &ReturnPanel) -> SymmetricMatrix {
    let x = panel.increments();
    SymmetricMatrix::new(x.transpose() * x).expect("RV of a valid panel")
}

fn rv_to_prv(rv: &SymmetricMatrix, lambda: f64) -> Result<PrvEstimate, EstimatorError> {
    let matrix = soft_threshold_eigen(rv, lambda)?;
    let es_raw = eigen_sym(rv);
    let eigenvalues_raw: Vec<f64> = es_raw.eigenvalues.iter().map(|s| s.max(0.0)).collect();
    let eigenvalues_shrunk: Vec<f64> = eigenvalues_raw
        .iter()
        .map(|s| (s - 0.5 * lambda).max(0.0))
        .collect();
    let tiny = RANK_TINY * eigenvalues_raw.first().copied().unwrap_or(0.0).max(1.0);
    let rank = rank_eps(&matrix, tiny);
    let effective_rank_raw = if es_raw.spectral_norm() > 0.0 {
        rv.trace() / es_raw.spectral_norm()
    } else {
        0.0
    };
    Ok(PrvEstimate {
        matrix,
        lambda,
        eigenvalues_raw,
        eigenvalues_shrunk,
        rank,
        effective_rank_raw,
    })
}

/// Penalized realized variance: RV with eigenvalues soft-thresholded at λ/2.
pub fn prv(panel: &ReturnPanel, lambda: f64) -> Result<PrvEstimate, EstimatorError> {
    rv_to_prv(&realized_variance(panel), lambda)
}

/// Penalized spot variance over the block [t, t + h]: increments
/// ⌊t/Δ⌋+1 … ⌊(t+h)/Δ⌋, soft-thresholded and divided by h.
pub fn spot_prv(
    panel: &ReturnPanel,
    t: f64,
    h: f64,
    lambda: f64,
) -> Result<SpotEstimate, EstimatorError> {
    let delta = panel.delta();
    if t < 0.0 || t + h > 1.0 + 1e-12 || h <= 0.0 {
        return Err(EstimatorError::WindowOutOfRange { t, t_end: t + h });
    }
    // 1-based increment indices per the block definition.
    let first = (t / delta).floor() as usize + 1;
    let last = (((t + h) / delta).floor() as usize).min(panel.n());
    if last < first + 1 {
        return Err(EstimatorError::WindowTooShort(last.saturating_sub(first - 1)));
    }
    let d = panel.dim();
    let mut block = DMatrix::zeros(d, d);
    for k in first..=last {
        let r = panel.increments().row(k - 1);
        block += r.transpose() * r;
    }
    let block_rv = SymmetricMatrix::new(block).expect("block RV of a valid panel");
    let thresholded = soft_threshold_eigen(&block_rv, lambda)?;
    let matrix = SymmetricMatrix::new(thresholded.as_matrix() / h)?;
    let es = eigen_sym(&matrix);
    let tiny = RANK_TINY * es.spectral_norm().max(1.0);
    let rank = rank_eps(&matrix, tiny);
    let outside_guarantee_band = t < 0.5 * h || t > 1.0 - 1.5 * h;
    Ok(SpotEstimate {
        t,
        window: h,
        matrix,
        lambda,
        rank,
        outside_guarantee_band,
    })
}

/// Bipower variation (π/2)·(n/(n−1))·Σ_{k≥2} |r_k||r_{k−1}|.
pub fn bipower_variation(series: &[f64]) -> Result<f64, EstimatorError> {
    let n = series.len();
    if n < 3 {
        return Err(EstimatorError::InsufficientData {
            required: 3,
            actual: n,
        });
    }
    let sum: f64 = series
        .windows(2)
        .map(|w| w[0].abs() * w[1].abs())
        .sum();
    Ok(std::f64::consts::FRAC_PI_2 * (n as f64 / (n as f64 - 1.0)) * sum)
}

/// Per-asset truncation thresholds, `c_mult` local standard deviations with
/// the local std taken as sqrt(BV / n) over the whole window.
pub fn truncation_thresholds(
    panel: &ReturnPanel,
    c_mult: f64,
) -> Result<Vec<f64>, EstimatorError> {
    let n = panel.n();
    if n < 3 {
        return Err(EstimatorError::InsufficientData {
            required: 3,
            actual: n,
        });
    }
    (0..panel.dim())
        .map(|j| {
            let bv = bipower_variation(&panel.column(j))?;
            Ok(c_mult * (bv / n as f64).sqrt())
        })
        .collect()
}

/// Zeroes increments whose magnitude exceeds the given per-asset thresholds.
pub fn truncate_with_thresholds(
    panel: &ReturnPanel,
    thresholds: &[f64],
) -> Result<ReturnPanel, EstimatorError> {
    let mut out = panel.increments().clone();
    for (j, &threshold) in thresholds.iter().enumerate().take(panel.dim()) {
        if !threshold.is_finite() {
            continue; // c_mult = inf disables truncation
        }
        for k in 0..panel.n() {
            if out[(k, j)].abs() > threshold {
                out[(k, j)] = 0.0;
            }
        }
    }
    ReturnPanel::new(out, panel.delta())
}

/// Zeroes increments larger than `c_mult` local standard deviations, with
/// thresholds recomputed from the panel's own bipower variation.
pub fn truncate_returns(panel: &ReturnPanel, c_mult: f64) -> Result<ReturnPanel, EstimatorError> {
    let thresholds = truncation_thresholds(panel, c_mult)?;
    truncate_with_thresholds(panel, &thresholds)
}

/// Realized beta and volatility split for one asset against a market column.
#[derive(Debug, Clone, Copy)]
pub struct BetaStats {
    pub beta: f64,
    pub sigma_rv: f64,
    pub sigma_eps: f64,
}

pub fn realized_beta_stats(
    panel: &ReturnPanel,
    asset: usize,
    market: usize,
) -> Result<BetaStats, EstimatorError> {
    let d = panel.dim();
    if asset >= d {
        return Err(EstimatorError::BadAssetIndex(asset, d));
    }
    if market >= d {
        return Err(EstimatorError::BadAssetIndex(market, d));
    }
    if asset == market {
        return Err(EstimatorError::AssetEqualsMarket);
    }
    let rv = realized_variance(panel);
    let market_var = rv.get(market, market);
    if market_var == 0.0 {
        return Err(EstimatorError::DegenerateMarket);
    }
    let beta = rv.get(asset, market) / market_var;
    let asset_var = rv.get(asset, asset);
    let sigma_rv = asset_var.sqrt();
    let sigma_eps = (asset_var - beta * beta * market_var).max(0.0).sqrt();
    Ok(BetaStats {
        beta,
        sigma_rv,
        sigma_eps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn panel_from_rows(rows: &[&[f64]]) -> ReturnPanel {
        let n = rows.len();
        let d = rows[0].len();
        ReturnPanel::from_increments(DMatrix::from_fn(n, d, |i, j| rows[i][j])).unwrap()
    }

    #[test]
    fn rv_single_spike() {
        let panel = panel_from_rows(&[&[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0]]);
        let rv = realized_variance(&panel);
        assert_eq!(rv.get(0, 0), 1.0);
        for i in 0..3 {
            for j in 0..3 {
                if (i, j) != (0, 0) {
                    assert_eq!(rv.get(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn rv_unit_vectors() {
        let panel = panel_from_rows(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let rv = realized_variance(&panel);
        assert_eq!(rv.get(0, 0), 1.0);
        assert_eq!(rv.get(1, 1), 1.0);
        assert_eq!(rv.get(2, 2), 0.0);
        assert_eq!(rv.get(0, 1), 0.0);
    }

    #[test]
    fn rv_matches_outer_product_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(5, 3, |_, _| rng.gen_range(-1.0..1.0));
        let panel = ReturnPanel::from_increments(x.clone()).unwrap();
        let rv = realized_variance(&panel);
        // Independent entrywise loop.
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..5 {
                    s += x[(k, i)] * x[(k, j)];
                }
                assert!((rv.get(i, j) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn prv_zero_lambda_is_rv() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(10, 4, |_, _| rng.gen_range(-1.0..1.0));
        let panel = ReturnPanel::from_increments(x).unwrap();
        let rv = realized_variance(&panel);
        let est = prv(&panel, 0.0).unwrap();
        assert!(est.matrix.frobenius_distance(&rv) < 1e-9);
        assert_eq!(est.rank, 4);
    }

    #[test]
    fn prv_huge_lambda_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(10, 4, |_, _| rng.gen_range(-1.0..1.0));
        let panel = ReturnPanel::from_increments(x).unwrap();
        let top = eigen_sym(&realized_variance(&panel)).eigenvalues[0];
        let est = prv(&panel, 2.0 * top + 1.0).unwrap();
        assert_eq!(est.rank, 0);
        assert!(est.matrix.max_abs_entry() < 1e-12);
    }

    #[test]
    fn prv_invariants_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(20, 4, |_, _| rng.gen_range(-1.0..1.0));
        let panel = ReturnPanel::from_increments(x).unwrap();
        let est = prv(&panel, 0.7).unwrap();
        for (k, s) in est.eigenvalues_shrunk.iter().enumerate() {
            let expect = (est.eigenvalues_raw[k] - 0.35).max(0.0);
            assert!((s - expect).abs() < 1e-12);
        }
        let positive = est.eigenvalues_shrunk.iter().filter(|s| **s > 0.0).count();
        assert_eq!(est.rank, positive);
    }

    #[test]
    fn spot_full_window_matches_prv() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(16, 3, |_, _| rng.gen_range(-1.0..1.0));
        let panel = ReturnPanel::from_increments(x).unwrap();
        let rv = realized_variance(&panel);
        let spot = spot_prv(&panel, 0.0, 1.0, 0.0).unwrap();
        assert!(spot.matrix.frobenius_distance(&rv) < 1e-9);
        let est = prv(&panel, 0.4).unwrap();
        let spot = spot_prv(&panel, 0.0, 1.0, 0.4).unwrap();
        assert!(spot.matrix.frobenius_distance(&est.matrix) < 1e-9);
    }

    #[test]
    fn spot_constant_volatility_consistent() {
        // Constant spot variance c: block RV / h should approach c as n grows.
        let c = 0.04f64;
        let mut errors = Vec::new();
        for &n in &[2_000usize, 32_000] {
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            let delta = 1.0 / n as f64;
            let x = DMatrix::from_fn(n, 2, |_, _| {
                c.sqrt() * delta.sqrt() * rng.sample::<f64, _>(StandardNormal)
            });
            let panel = ReturnPanel::from_increments(x).unwrap();
            let h = delta.sqrt();
            let spot = spot_prv(&panel, 0.4, h, 0.0).unwrap();
            let truth = SymmetricMatrix::diagonal(&[c, c]).unwrap();
            errors.push(spot.matrix.frobenius_distance(&truth));
        }
        assert!(errors[1] < errors[0]);
    }

    #[test]
    fn spot_rejects_bad_windows() {
        let panel = panel_from_rows(&[&[0.1, 0.1], &[0.1, 0.1], &[0.1, 0.1], &[0.1, 0.1]]);
        assert!(matches!(
            spot_prv(&panel, 0.9, 0.5, 0.0),
            Err(EstimatorError::WindowOutOfRange { .. })
        ));
        assert!(matches!(
            spot_prv(&panel, 0.0, 0.25, 0.0),
            Err(EstimatorError::WindowTooShort(_))
        ));
    }

    #[test]
    fn bipower_trivials() {
        assert_eq!(bipower_variation(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        let n = 10;
        let a = 0.3;
        let series = vec![a; n];
        let expect = std::f64::consts::FRAC_PI_2 * n as f64 * a * a;
        assert!((bipower_variation(&series).unwrap() - expect).abs() < 1e-12);
        assert!(matches!(
            bipower_variation(&[1.0, 2.0]),
            Err(EstimatorError::InsufficientData { .. })
        ));
    }

    #[test]
    fn bipower_consistent_for_integrated_variance() {
        let n = 10_000;
        let sigma2 = 0.09;
        let delta = 1.0 / n as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let series: Vec<f64> = (0..n)
            .map(|_| (sigma2 * delta).sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let bv = bipower_variation(&series).unwrap();
        assert!((bv - sigma2).abs() < 0.05 * sigma2);
    }

    #[test]
    fn truncation_zeroes_only_the_spike() {
        let n = 200;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut x = DMatrix::from_fn(n, 2, |_, _| {
            0.01 * rng.sample::<f64, _>(StandardNormal)
        });
        x[(50, 0)] = 1.0; // ~100 sigma spike
        let panel = ReturnPanel::from_increments(x.clone()).unwrap();
        let out = truncate_returns(&panel, 3.0).unwrap();
        assert_eq!(out.increments()[(50, 0)], 0.0);
        let mut changed = 0;
        for k in 0..n {
            for j in 0..2 {
                if out.increments()[(k, j)] != x[(k, j)] {
                    changed += 1;
                }
            }
        }
        assert_eq!(changed, 1);
        // Input untouched.
        assert_eq!(panel.increments()[(50, 0)], 1.0);
    }

    #[test]
    fn truncation_noop_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = DMatrix::from_fn(50, 2, |_, _| 0.01 * rng.sample::<f64, _>(StandardNormal));
        let panel = ReturnPanel::from_increments(x).unwrap();
        let out = truncate_returns(&panel, f64::INFINITY).unwrap();
        assert_eq!(out.increments(), panel.increments());
        // Clean Gaussian panel at a generous multiplier: unchanged.
        let out = truncate_returns(&panel, 6.0).unwrap();
        assert_eq!(out.increments(), panel.increments());
    }

    #[test]
    fn truncation_idempotent_with_fixed_thresholds() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut x = DMatrix::from_fn(100, 3, |_, _| 0.01 * rng.sample::<f64, _>(StandardNormal));
        x[(10, 1)] = 0.5;
        x[(70, 2)] = -0.4;
        let panel = ReturnPanel::from_increments(x).unwrap();
        let thresholds = truncation_thresholds(&panel, 3.0).unwrap();
        let once = truncate_with_thresholds(&panel, &thresholds).unwrap();
        let twice = truncate_with_thresholds(&once, &thresholds).unwrap();
        assert_eq!(once.increments(), twice.increments());
    }

    #[test]
    fn beta_stats_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 500;
        let market: Vec<f64> = (0..n)
            .map(|_| 0.02 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        // Asset 0 == market, asset 2 = 2*market + small noise.
        let x = DMatrix::from_fn(n, 3, |k, j| match j {
            0 => market[k],
            1 => market[k],
            _ => 2.0 * market[k] + 0.001 * rng.sample::<f64, _>(StandardNormal),
        });
        let panel = ReturnPanel::from_increments(x).unwrap();
        let same = realized_beta_stats(&panel, 0, 1).unwrap();
        assert!((same.beta - 1.0).abs() < 1e-12);
        assert!(same.sigma_eps < 1e-9);
        let levered = realized_beta_stats(&panel, 2, 1).unwrap();
        assert!((levered.beta - 2.0).abs() < 0.05);
        assert!(matches!(
            realized_beta_stats(&panel, 1, 1),
            Err(EstimatorError::AssetEqualsMarket)
        ));
    }

    #[test]
    fn beta_orthogonal_asset() {
        // Two orthogonal columns by construction.
        let x = DMatrix::from_fn(4, 2, |k, j| match (k, j) {
            (0, 0) => 1.0,
            (1, 0) => 1.0,
            (2, 1) => 1.0,
            (3, 1) => -1.0,
            _ => 0.0,
        });
        let panel = ReturnPanel::from_increments(x).unwrap();
        let stats = realized_beta_stats(&panel, 0, 1).unwrap();
        assert_eq!(stats.beta, 0.0);
        assert!((stats.sigma_eps - stats.sigma_rv).abs() < 1e-12);
    }
}
