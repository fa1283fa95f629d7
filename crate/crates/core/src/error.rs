use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("calendar does not bracket the data range: {0}")]
    CalendarMargin(String),

    #[error("invalid holiday calendar: {0}")]
    InvalidCalendar(String),

    #[error("dates are not contiguous: {0}")]
    NonContiguousDates(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parameter outside its support: {0}")]
    Support(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
