use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants fall into two groups: input/configuration problems and numerical
/// failures. [`Error::is_numerical`] tells them apart, which the CLI uses to
/// choose an exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: &'static str, found: String },

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("label {label} at row {row} is outside [0, {num_classes})")]
    CorruptLabel { row: usize, label: i64, num_classes: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("file has no labels")]
    MissingLabels,

    #[error("row {0} has zero norm")]
    ZeroNormRow(usize),

    #[error("class {class} has {available} samples, need at least {required}")]
    InsufficientSamples { class: usize, available: usize, required: usize },

    #[error("invalid metadata: {0}")]
    Metadata(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("covariance is singular after shrinkage {shrinkage}; try shrinkage >= {suggested}")]
    SingularCovariance { shrinkage: f64, suggested: f64 },

    #[error("local linear system is singular: {0}")]
    SingularSystem(String),

    #[error("positive-definite solve failed after jitter escalation to {jitter:e}")]
    SolveFailed { jitter: f64 },

    #[error("fourier map bandwidth {map} does not match model bandwidth {model}")]
    BetaMismatch { map: f64, model: f64 },

    #[error("corrupt model container: {0}")]
    CorruptModel(String),

    #[error("sweep grid is empty: {0}")]
    EmptyGrid(String),

    #[error("transfer protocol needs an anchor task")]
    MissingAnchor,

    #[error("task {0:?} has no validation split")]
    MissingValidation(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable variant name, used in CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            Error::Io(_) => "IoError",
            Error::BadMagic { .. } => "BadMagic",
            Error::DimMismatch(_) => "DimMismatch",
            Error::CorruptLabel { .. } => "CorruptLabel",
            Error::NonFinite { .. } => "NonFinite",
            Error::MissingLabels => "MissingLabels",
            Error::ZeroNormRow(_) => "ZeroNormRow",
            Error::InsufficientSamples { .. } => "InsufficientSamples",
            Error::Metadata(_) => "Metadata",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::InvalidKernel(_) => "InvalidKernel",
            Error::SingularCovariance { .. } => "SingularCovariance",
            Error::SingularSystem(_) => "SingularSystem",
            Error::SolveFailed { .. } => "SolveFailed",
            Error::BetaMismatch { .. } => "BetaMismatch",
            Error::CorruptModel(_) => "CorruptModel",
            Error::EmptyGrid(_) => "EmptyGrid",
            Error::MissingAnchor => "MissingAnchor",
            Error::MissingValidation(_) => "MissingValidation",
            Error::Json(_) => "JsonError",
            Error::Csv(_) => "CsvError",
        }
    }

    /// True for solver and factorization failures.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularCovariance { .. } | Error::SingularSystem(_) | Error::SolveFailed { .. }
        )
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimMismatch(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
