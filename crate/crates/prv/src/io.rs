//! Data ingestion and export: log-price CSV panels, simulation ground-truth
//! sidecars, and scenario configuration files.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{EstimatorError, ReturnPanel};
use crate::matrix::SymmetricMatrix;
use crate::simulator::{CoxScenarioConfig, FactorModelConfig, SimOutput};

/// Relative tolerance on grid spacing: spacings may differ from the mean by
/// at most this fraction.
const SPACING_TOL: f64 = 0.01;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },

    #[error("CSV parse failure: {0}")]
    Csv(#[from] csv::Error),

    #[error("file has no data rows")]
    Empty,

    #[error("need at least 3 price rows (2 increments), got {0}")]
    InsufficientRows(usize),

    #[error("row {row} has {actual} cells, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        actual: usize,
    },

    #[error("non-numeric or missing cell at row {row}, column {column}: {value:?}")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("unparseable timestamp at row {row}: {value:?}")]
    BadTimestamp { row: usize, value: String },

    #[error("timestamps not strictly increasing at row {row}")]
    NonMonotoneTimestamps { row: usize },

    #[error("irregular grid at row {row}: spacing {spacing} deviates more than 1% from {mean}")]
    IrregularSpacing { row: usize, spacing: f64, mean: f64 },

    #[error("non-positive price at row {row}, column {column}; cannot take logs")]
    NonPositivePrice { row: usize, column: String },

    #[error("config must define exactly one of [factor_model] or [cox]")]
    AmbiguousScenario,

    #[error("config parse failure: {0}")]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Panel(#[from] EstimatorError),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    /// Treat the price columns as raw prices and log-transform on ingest.
    pub raw_prices: bool,
}

fn parse_timestamp(raw: &str, row: usize) -> Result<f64, IoError> {
    let trimmed = raw.trim();
    if let Ok(v) = trimmed.parse::<f64>() {
        return Ok(v);
    }
    // ISO-8601: date-time with optional offset, seconds resolution.
    let normalized = trimmed.replace('T', " ");
    let fmts = ["%Y-%m-%d %H:%M:%S%z", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d"];
    for fmt in fmts {
        if let Ok(dt) = chrono::DateTime::parse_from_str(&normalized, fmt) {
            return Ok(dt.timestamp() as f64);
        }
        if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(&normalized, fmt) {
            return Ok(dt.and_utc().timestamp() as f64);
        }
        if let Ok(d) = chrono::NaiveDate::parse_from_str(&normalized, fmt) {
            return Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp() as f64);
        }
    }
    Err(IoError::BadTimestamp {
        row,
        value: raw.to_string(),
    })
}

/// Reads a log-price panel CSV (header of asset names, first column a
/// timestamp) into a return panel over the window normalized to [0, 1].
pub fn ingest_csv(path: &Path, options: IngestOptions) -> Result<ReturnPanel, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => IoError::Read {
                path: path.display().to_string(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => IoError::Csv(e),
        })?;
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.to_string())
        .collect();
    if headers.len() < 2 {
        return Err(IoError::Empty);
    }
    let asset_names = &headers[1..];
    let expected = headers.len();

    let mut timestamps: Vec<f64> = Vec::new();
    let mut prices: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2; // 1-based, counting the header
        if record.len() != expected {
            return Err(IoError::RaggedRow {
                row,
                expected,
                actual: record.len(),
            });
        }
        timestamps.push(parse_timestamp(&record[0], row)?);
        let mut vals = Vec::with_capacity(asset_names.len());
        for (j, cell) in record.iter().skip(1).enumerate() {
            let v: f64 = cell.parse().map_err(|_| IoError::BadCell {
                row,
                column: asset_names[j].clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(IoError::BadCell {
                    row,
                    column: asset_names[j].clone(),
                    value: cell.to_string(),
                });
            }
            let v = if options.raw_prices {
                if v <= 0.0 {
                    return Err(IoError::NonPositivePrice {
                        row,
                        column: asset_names[j].clone(),
                    });
                }
                v.ln()
            } else {
                v
            };
            vals.push(v);
        }
        prices.push(vals);
    }

    let rows = prices.len();
    if rows < 3 {
        return Err(IoError::InsufficientRows(rows));
    }
    // Strictly increasing, equidistant grid.
    let mean_spacing = (timestamps[rows - 1] - timestamps[0]) / (rows - 1) as f64;
    for k in 1..rows {
        if timestamps[k] - timestamps[k - 1] <= 0.0 {
            return Err(IoError::NonMonotoneTimestamps { row: k + 2 });
        }
    }
    for k in 1..rows {
        let spacing = timestamps[k] - timestamps[k - 1];
        if (spacing - mean_spacing).abs() > SPACING_TOL * mean_spacing {
            return Err(IoError::IrregularSpacing {
                row: k + 2,
                spacing,
                mean: mean_spacing,
            });
        }
    }

    let n = rows - 1;
    let d = asset_names.len();
    let increments = DMatrix::from_fn(n, d, |k, j| prices[k + 1][j] - prices[k][j]);
    Ok(ReturnPanel::from_increments(increments)?)
}

fn fmt17(v: f64) -> String {
    format!("{v:.17e}")
}

/// Writes a panel back out as a log-price CSV (integer-index timestamps,
/// prices starting at 0), the inverse of `ingest_csv` up to float printing.
pub fn export_panel_csv(panel: &ReturnPanel, path: &Path) -> Result<(), IoError> {
    let n = panel.n();
    let d = panel.dim();
    let mut out = String::new();
    out.push_str("timestamp");
    for j in 0..d {
        out.push_str(&format!(",asset_{j:03}"));
    }
    out.push('\n');
    let mut levels = vec![0.0f64; d];
    for k in 0..=n {
        out.push_str(&k.to_string());
        for level in levels.iter() {
            out.push(',');
            out.push_str(&fmt17(*level));
        }
        out.push('\n');
        if k < n {
            for (j, level) in levels.iter_mut().enumerate() {
                *level += panel.increments()[(k, j)];
            }
        }
    }
    fs::write(path, out).map_err(|source| IoError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Ground-truth sidecar written next to simulated panels.
#[derive(Debug, Serialize, Deserialize)]
pub struct GroundTruth {
    pub delta: f64,
    pub qv_true: Vec<Vec<f64>>,
    pub loadings: Option<Vec<Vec<f64>>>,
}

impl GroundTruth {
    pub fn from_sim(sim: &SimOutput) -> Self {
        let d = sim.qv_true.dim();
        Self {
            delta: sim.panel.delta(),
            qv_true: (0..d)
                .map(|i| (0..d).map(|j| sim.qv_true.get(i, j)).collect())
                .collect(),
            loadings: sim.loadings.as_ref().map(|b| {
                (0..b.nrows())
                    .map(|i| (0..b.ncols()).map(|j| b[(i, j)]).collect())
                    .collect()
            }),
        }
    }

    pub fn qv_matrix(&self) -> Result<SymmetricMatrix, crate::matrix::MatrixError> {
        SymmetricMatrix::from_rows(&self.qv_true)
    }
}

/// A scenario config file holds exactly one of the two simulation setups.
#[derive(Debug, Clone, Deserialize)]
pub struct ScenarioFile {
    pub factor_model: Option<FactorModelConfig>,
    pub cox: Option<CoxScenarioConfig>,
}

#[derive(Debug, Clone)]
pub enum Scenario {
    FactorModel(FactorModelConfig),
    Cox(CoxScenarioConfig),
}

pub fn load_scenario(path: &Path) -> Result<Scenario, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let file: ScenarioFile = toml::from_str(&text)?;
    match (file.factor_model, file.cox) {
        (Some(cfg), None) => Ok(Scenario::FactorModel(cfg)),
        (None, Some(cfg)) => Ok(Scenario::Cox(cfg)),
        _ => Err(IoError::AmbiguousScenario),
    }
}

/// Loads just the factor-model section, as required by the Monte Carlo
/// subcommand.
pub fn load_factor_model(path: &Path) -> Result<FactorModelConfig, IoError> {
    match load_scenario(path)? {
        Scenario::FactorModel(cfg) => Ok(cfg),
        Scenario::Cox(_) => Err(IoError::AmbiguousScenario),
    }
}
