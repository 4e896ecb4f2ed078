//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("site index {index} out of range for volume {volume}")]
    SiteOutOfRange { index: usize, volume: usize },

    #[error("invalid coupling set: {0}")]
    InvalidCoupling(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("all sites are clamped; nothing to sample")]
    AllSitesClamped,

    #[error("quadrature supports at most {max} free sites, got {got}")]
    QuadratureTooLarge { max: usize, got: usize },

    #[error(
        "quadrature boundary mass too large (ratio {ratio:.3e} at half-width {half_width}); \
         increase half_width"
    )]
    QuadratureBoundary { ratio: f64, half_width: f64 },

    #[error("training diverged at epoch {epoch}: {reason}")]
    TrainingDiverged { epoch: usize, reason: String },

    #[error("csv parse error at line {line}: {msg}")]
    CsvParse { line: u64, msg: String },

    #[error("duplicate price row for ({ticker}, {date})")]
    DuplicateKey { ticker: String, date: String },

    #[error("non-positive price {price} for ({ticker}, {date})")]
    NonPositivePrice {
        ticker: String,
        date: String,
        price: f64,
    },

    #[error("ticker {0} not found")]
    UnknownTicker(String),

    #[error("insufficient history: need {needed}, have {have}")]
    InsufficientHistory { needed: usize, have: usize },

    #[error("power-law fit requires y values of one sign and nonzero; got {0}")]
    MixedSignFit(String),

    #[error("standard deviation must be positive, got {0}")]
    ZeroSigma(f64),

    #[error("scaling run aborted at volume {volume}: {reason}")]
    ScalingAborted {
        volume: usize,
        reason: String,
        /// Per-volume (V, mean weight, mean bias) completed before the abort.
        completed: Vec<(usize, f64, f64)>,
    },

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
