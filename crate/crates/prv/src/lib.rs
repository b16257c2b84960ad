//! Penalized realized variance (PRV) estimation for high-dimensional
//! high-frequency return panels.
//!
//! The estimator soft-thresholds the eigenvalues of the realized variance
//! matrix, encouraging low rank; the shrinkage level is selected by an
//! i.i.d. bootstrap of the return increments. The crate also provides a
//! localized (spot) version of the estimator, jump truncation, synthetic
//! data generators with known ground truth, and a Monte Carlo harness.

pub mod cli;
pub mod estimators;
pub mod experiments;
pub mod io;
pub mod matrix;
pub mod simulator;
pub mod tuning;

pub use estimators::{
    bipower_variation, prv, realized_beta_stats, realized_variance, spot_prv, truncate_returns,
    PrvEstimate, ReturnPanel, SpotEstimate,
};
pub use matrix::{
    effective_rank, eigen_sym, rank_eps, schatten_norm, soft_threshold_eigen, EigenSystem,
    SchattenP, SymmetricMatrix,
};
pub use simulator::{
    draw_loadings, simulate_cox_scenario, simulate_factor_model, CoxScenarioConfig,
    FactorModelConfig, SimOutput,
};
pub use tuning::{
    bootstrap_lambda, gaussian_lambda_star, theoretical_lambda, BootstrapConfig, Center, VolBounds,
};
