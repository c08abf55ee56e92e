use thiserror::Error;

/// Errors raised anywhere in the forecasting toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no input records")]
    Empty,

    #[error("record {index} has unit {found}, expected {expected}")]
    MixedUnits {
        index: usize,
        expected: &'static str,
        found: &'static str,
    },

    #[error("timestamps not strictly increasing at record {index}")]
    Unsorted { index: usize },

    #[error("timestamp {0} is not on an hour boundary")]
    NotHourAligned(String),

    #[error("series has no non-missing load values")]
    AllMissing,

    #[error("cannot impute {channel}: no earlier observation for the gap starting at index {index}")]
    Unfillable { channel: &'static str, index: usize },

    #[error("series still contains missing {channel} values (first at index {index})")]
    MissingValues { channel: &'static str, index: usize },

    #[error("lag {lag} h is shorter than the forecast horizon {horizon} h")]
    LeakyLag { lag: usize, horizon: usize },

    #[error("input of length {len} is too short (need at least {needed})")]
    TooShort { len: usize, needed: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("feature mismatch: model expects {expected:?}, got {actual:?}")]
    FeatureMismatch {
        expected: Vec<String>,
        actual: Vec<String>,
    },

    #[error("unknown loss `{0}`")]
    UnknownLoss(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("non-positive curvature: H + lambda = {0}")]
    NonPositiveCurvature(f64),

    #[error("optimizer did not converge in {iterations} iterations (best objective {best_objective}, best point {best_point:?})")]
    NoConvergence {
        iterations: usize,
        best_objective: f64,
        best_point: Vec<f64>,
    },

    #[error("SVR solver reached the iteration cap {iterations} with max KKT violation {max_violation}")]
    SvrNotConverged { iterations: usize, max_violation: f64 },

    #[error("metric {metric} is undefined for model {model}")]
    UndefinedMetric { metric: String, model: String },

    #[error("no feasible candidate in the grid")]
    NoFeasibleCandidate,

    #[error("unsupported model file: {0}")]
    ModelFormat(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
