use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error(
        "input support [{start:.4}, {end:.4}] is not contained in the capture window [0, 1]; \
         the multiplicative engine would ignore clipping"
    )]
    NotContained { start: f64, end: f64 },

    #[error("unsupported quadrature: {0}")]
    UnsupportedQuadrature(String),

    #[error("entry-time range [{start}, {end}] does not cover the capture window [0, {required}]")]
    InsufficientTimeRange { start: f64, end: f64, required: f64 },

    #[error("signal is nonzero at t = {time} outside the capture window [0, {window_end}]")]
    SupportViolation { time: f64, window_end: f64 },

    #[error("switching profile settles at reflectivity {level} (t = {settle}) and never closes fully")]
    ProfileNotSettled { settle: f64, level: f64 },

    #[error("matrix is identically zero")]
    ZeroMatrix,

    #[error("no half-maximum crossing inside the window ({0})")]
    NoHalfMaxCrossing(&'static str),

    #[error("objective is not finite at tau_s = {0}")]
    NonFiniteObjective(f64),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
