use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the analysis pipeline.
///
/// Variants split into two families: malformed or inconsistent input, and
/// statistical guards that refuse to produce an estimate from too little data.
/// The CLI maps the first family to exit status 2 and the second to 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    MalformedRow { line: usize, message: String },

    #[error("line {line}: duplicate timestamp {timestamp}")]
    DuplicateTimestamp { line: usize, timestamp: String },

    #[error("line {line}: timestamp {timestamp} falls outside every trading session")]
    OutsideCalendar { line: usize, timestamp: String },

    #[error("line {line}: value {value} is not a finite positive number")]
    NonPositiveValue { line: usize, value: f64 },

    #[error("invalid calendar: {0}")]
    Calendar(String),

    #[error("segment boundary {0} lies outside the data span")]
    BoundaryOutsideSpan(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("series too short: need at least {needed} points, have {have}")]
    TooShort { needed: usize, have: usize },

    #[error("insufficient tail: need at least {needed} samples, have {have}")]
    InsufficientTail { needed: usize, have: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    /// True for failures caused by statistical guards rather than bad input.
    pub fn is_statistical(&self) -> bool {
        matches!(
            self,
            Error::InsufficientTail { .. } | Error::InsufficientData(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
