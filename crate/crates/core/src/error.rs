use thiserror::Error;

/// Errors raised by the numerical toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("no critical point of the fiber map: {0}")]
    NoCriticalPoint(String),

    #[error("grid does not resolve the profile: {0}")]
    Resolution(String),

    #[error("root bracket has no sign change on [{lo}, {hi}] (values {f_lo:e}, {f_hi:e}): {context}")]
    Bracket {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
        context: String,
    },

    #[error("shooting failed to bracket the ground state: {message} (history: {history:?})")]
    Shooting {
        message: String,
        history: Vec<(f64, i8)>,
    },

    #[error("scan exhausted: {0}")]
    ScanExhausted(String),

    #[error("evaluation failed at t = {t}: {message}")]
    Evaluation { t: f64, message: String },

    #[error("expression error: {0}")]
    Expression(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
