use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("row {row}: field `{field}`: {message}")]
    MalformedRow {
        row: usize,
        field: String,
        message: String,
    },

    #[error("gap in hourly coverage: missing ({date}, hour {hour})")]
    Gap { date: NaiveDate, hour: u8 },

    #[error("duplicate record for ({date}, hour {hour})")]
    Duplicate { date: NaiveDate, hour: u8 },

    #[error("row {row}: expected {expected} capacity columns, found {found}")]
    CapacityLength {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("supply shortage: offered quantity falls {deficit} MWh short of demand")]
    Shortage { deficit: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("feature ordering does not match the fitted scaling parameters")]
    OrderingMismatch,

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("normal equations could not be solved for any damping up to mu_max = {mu_max:e}")]
    SolveBreakdown { mu_max: f64 },

    #[error("model file: {0}")]
    ModelFormat(String),
}

impl Error {
    /// Stable, machine-parsable class name used by the CLI on failure.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Csv(_) | Error::MalformedRow { .. } | Error::CapacityLength { .. } => "malformed-input",
            Error::Json(_) | Error::ModelFormat(_) => "format",
            Error::Gap { .. } | Error::Duplicate { .. } => "coverage",
            Error::Shortage { .. } => "shortage",
            Error::InvalidInput(_) | Error::DimensionMismatch { .. } | Error::OrderingMismatch => {
                "invalid-input"
            }
            Error::InvalidConfig(_) => "invalid-config",
            Error::NonFinite(_) => "non-finite",
            Error::InsufficientData(_) => "insufficient-data",
            Error::UndefinedCorrelation(_) => "undefined-correlation",
            Error::SolveBreakdown { .. } => "numerical-breakdown",
        }
    }
}
