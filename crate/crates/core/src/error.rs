use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric input was NaN or infinite.
    #[error("non-finite value in {component}")]
    NonFinite { component: String },

    #[error("invalid parameters: {}", .0.join(", "))]
    InvalidParams(Vec<String>),

    #[error("configuration error: {0}")]
    Config(String),

    /// The state left the representable region during integration.
    #[error("integration diverged at t = {time}")]
    Divergence { time: f64 },

    #[error("time {t} outside trajectory range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("degenerate equilibrium: {0}")]
    DegenerateEquilibrium(String),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("length mismatch: observed {observed}, predicted {predicted}")]
    LengthMismatch { observed: usize, predicted: usize },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid series: {0}")]
    Validation(String),

    #[error("session error: {0}")]
    Session(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the numerics rather than by the inputs.
    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::Divergence { .. })
    }
}
