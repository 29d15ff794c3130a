use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty cohort")]
    EmptyCohort,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("cause {cause} out of range 1..={n_causes}")]
    CauseOutOfRange { cause: usize, n_causes: usize },
    #[error("invalid spec table `{table}`: {reason}")]
    InvalidSpec { table: String, reason: String },
    #[error("invalid cohort: {0}")]
    InvalidCohort(String),
    #[error("degenerate group: {0}")]
    DegenerateGroup(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("coincident jumps at t = {0}; use the bounded estimator")]
    CoincidentJumps(f64),
    #[error("cumulative incidences sum above one at t = {0}")]
    CifSumExceedsOne(f64),
    #[error("ratio undefined: nonpositive potential outcome at t = {0}")]
    RatioUndefined(f64),
    #[error("missing potential-outcome curve for query {0}")]
    MissingQuery(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("stratification error: {0}")]
    Stratification(String),
    #[error("infeasible bands: {0}")]
    InfeasibleBands(String),
    #[error("estimation failure: {0}")]
    Estimation(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by malformed input data rather than by the estimation itself.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::EmptyCohort
                | Error::LengthMismatch(_)
                | Error::NegativeTime(_)
                | Error::InvalidSpec { .. }
                | Error::InvalidCohort(_)
                | Error::DegenerateGroup(_)
                | Error::Schema(_)
                | Error::Csv(_)
                | Error::Json(_)
                | Error::Stratification(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
