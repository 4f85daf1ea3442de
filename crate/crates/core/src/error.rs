use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input violated a type invariant or operation precondition.
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    /// A scenario file could not be parsed or is structurally wrong.
    #[error("config error: {0}")]
    Config(String),

    #[error("singular matrix in {context} (|det| = {det:e})")]
    SingularMatrix { context: String, det: f64 },

    #[error("integration diverged at t = {time:.4} s: {quantity} is not finite")]
    IntegrationDiverged { quantity: String, time: f64 },

    #[error("RBF adaptation diverged on channel {channel}: non-finite weight")]
    AdaptationDiverged { channel: usize },

    #[error("filter diverged at t = {time:.4} s: {reason}")]
    FilterDiverged { reason: String, time: f64 },

    #[error("innovation covariance for sensor '{sensor}' is not invertible")]
    SingularInnovation { sensor: String },

    #[error("measurement from '{sensor}' at t = {stamp:.4} s is older than filter time {filter_time:.4} s")]
    OutOfOrder {
        sensor: String,
        stamp: f64,
        filter_time: f64,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for failures that happen while a valid scenario is running.
    pub fn is_runtime(&self) -> bool {
        matches!(
            self,
            Error::IntegrationDiverged { .. }
                | Error::AdaptationDiverged { .. }
                | Error::FilterDiverged { .. }
                | Error::SingularInnovation { .. }
                | Error::SingularMatrix { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
