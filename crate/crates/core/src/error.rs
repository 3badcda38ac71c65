use thiserror::Error;

/// Errors raised by lattice generation, operator construction and invariant evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("window too small: {0}")]
    WindowTooSmall(String),

    #[error("insufficient sample: {0}")]
    InsufficientSample(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible parameters: {0}")]
    Infeasible(String),

    #[error("not a lattice site: {0}")]
    NotASite(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("symmetry violated: {0}")]
    SymmetryViolated(String),

    #[error("gapless spectrum: {0}")]
    Gapless(String),

    #[error("unresolved kernel: {0}")]
    Unresolved(String),

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit status used by the command line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Json(_) | Error::Io(_) => 2,
            Error::InvalidParameter(_) => 2,
            _ => 1,
        }
    }

    /// Stable machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::WindowTooSmall(_) => "window_too_small",
            Error::InsufficientSample(_) => "insufficient_sample",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Infeasible(_) => "infeasible",
            Error::NotASite(_) => "not_a_site",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::SymmetryViolated(_) => "symmetry_violated",
            Error::Gapless(_) => "gapless",
            Error::Unresolved(_) => "unresolved",
            Error::Inconclusive(_) => "inconclusive",
            Error::LinearAlgebra(_) => "linear_algebra",
            Error::Config { .. } => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// `{"kind", "key", "message"}`; `key` is set for config errors.
    pub fn record(&self) -> serde_json::Value {
        let key = match self {
            Error::Config { key, .. } => Some(key.clone()),
            _ => None,
        };
        serde_json::json!({ "kind": self.kind(), "key": key, "message": self.to_string(), "exit_code": self.exit_code() })
    }
}
