use thiserror::Error;

/// Errors raised anywhere in the forecasting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("non-uniform timestamp spacing at line {line}: expected {expected}, found {found}")]
    Spacing { line: usize, expected: i64, found: i64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("series too short: need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("power {p_now} is below the floor {floor}; apply the power floor before calling")]
    BelowPowerFloor { p_now: f64, floor: f64 },

    #[error("empty power curve model")]
    EmptyModel,

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
