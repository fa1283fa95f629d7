use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] gasnhmm::Error),

    #[error("split R-hat {rhat:.4} for {name} exceeds the threshold {threshold}")]
    NotConverged { name: String, rhat: f64, threshold: f64 },
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Core(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Core(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

impl CliError {
    pub fn kind(&self) -> &'static str {
        use gasnhmm::Error as E;
        match self {
            Self::NotConverged { .. } => "not_converged",
            Self::Core(e) => match e {
                E::CalendarMargin(_) => "calendar_margin",
                E::InvalidCalendar(_) => "invalid_calendar",
                E::NonContiguousDates(_) => "non_contiguous_dates",
                E::InvalidInput(_) => "invalid_input",
                E::Support(_) => "support",
                E::Config(_) => "config",
                E::Parse { .. } => "parse",
                E::Numerical(_) => "numerical",
                E::Io(_) => "io",
                E::Csv(_) => "csv",
                E::Json(_) => "json",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::NotConverged { .. } => EXIT_NOT_CONVERGED,
            Self::Core(gasnhmm::Error::Numerical(_)) => EXIT_NUMERICAL,
            Self::Core(_) => EXIT_INPUT,
        }
    }

    /// Machine-readable form written to stderr on failure.
    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        match self {
            Self::Core(gasnhmm::Error::Parse { path, line, .. }) => {
                v["path"] = json!(path.display().to_string());
                v["line"] = json!(line);
            }
            Self::Core(gasnhmm::Error::Csv(e)) => {
                if let Some(p) = e.position() {
                    v["line"] = json!(p.line());
                }
            }
            Self::NotConverged { name, rhat, threshold } => {
                v["parameter"] = json!(name);
                v["rhat"] = json!(rhat);
                v["threshold"] = json!(threshold);
            }
            _ => {}
        }
        v
    }
}
