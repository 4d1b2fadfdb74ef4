use faer::c64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} failed to converge on a {size}x{size} matrix")]
    Decomposition { what: &'static str, size: usize },

    #[error("matrix is singular to working precision (condition estimate {cond:.3e})")]
    Singular { cond: f64 },

    #[error("sparse factorization found no usable pivot in column {column}")]
    SingularPivot { column: usize },

    #[error("shift {s} is a pole of the problem")]
    Pole { s: c64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config field `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("reduced spectrum empty")]
    ReducedSpectrumEmpty,

    #[error("contour rank test inconclusive with {probes} probe columns; increase probes")]
    ContourRank { probes: usize },

    #[error("{0} did not converge")]
    NoConvergence(&'static str),

    #[error("problem size {size} exceeds the oracle cap {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("{path}: {source}")]
    File { path: std::path::PathBuf, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
