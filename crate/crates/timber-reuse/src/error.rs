//! Crate-wide error type.
//!
//! Error messages are module-qualified (`data:`, `model:`, `sampler:`, ...) so
//! that failures surfacing at the CLI name the subsystem that produced them.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("data: input file not found: {0}")]
    InputFile(String),

    #[error("data: {0}")]
    Io(#[from] std::io::Error),

    #[error("data: {0}")]
    Csv(#[from] csv::Error),

    #[error("data: missing required column `{0}`")]
    MissingColumn(String),

    #[error("data: unknown column `{0}` (schema: id,group,orientation,modulus_gpa,max_stress_mpa[,density_kg_m3,moisture_pct,size_mm,hardness])")]
    UnknownColumn(String),

    #[error("data: row {row}: {message}")]
    InvalidRow { row: u64, message: String },

    #[error("data: no control (group 0) specimens for orientation `{0}`; cannot form a baseline")]
    MissingBaseline(String),

    #[error("data: feature `{feature}` missing on record `{id}`")]
    MissingFeature { id: String, feature: String },

    #[error("data: feature column `{0}` is constant (zero variance); cannot standardize")]
    DegenerateFeature(String),

    #[error("data: unknown feature `{0}` (available: group, orientation, density, moisture, size, hardness)")]
    UnknownFeature(String),

    #[error("model: dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("model: non-finite log density")]
    NonFiniteLogp,

    #[error("model: non-finite gradient at coordinate {0}")]
    NonFiniteGrad(usize),

    #[error("model: feature columns do not match fit metadata: expected [{expected}], got [{actual}]")]
    FeatureMismatch { expected: String, actual: String },

    #[error("sampler: chain {chain} failed warmup: {message}; try a smaller initial step size")]
    WarmupFailed { chain: usize, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("report: {0}")]
    Artifacts(String),

    #[error("report: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 = validation/config, 2 = diagnostics
    /// failure, 3 = internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InputFile(_)
            | Error::MissingColumn(_)
            | Error::UnknownColumn(_)
            | Error::InvalidRow { .. }
            | Error::MissingBaseline(_)
            | Error::MissingFeature { .. }
            | Error::DegenerateFeature(_)
            | Error::UnknownFeature(_)
            | Error::FeatureMismatch { .. }
            | Error::Config(_)
            | Error::Artifacts(_) => 1,
            _ => 3,
        }
    }
}
