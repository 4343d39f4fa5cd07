use thiserror::Error;

/// Errors raised by model construction, sampling, detection and the harness.
#[derive(Debug, Error)]
pub enum TsdError {
    #[error("cross-correlation matrix is identically zero")]
    AllZeroCrossMatrix,
    #[error("cross-correlation amplitude is zero")]
    ZeroCross,
    #[error("joint detection requires a positive background energy (got {0})")]
    ZeroBackground(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("matrix is not Hermitian (relative asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not positive semidefinite (min eigenvalue {min:.6e}, max |eigenvalue| {max:.6e})")]
    NotPsd { min: f64, max: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("bad block partition ({d1} + {d2} != {d})")]
    BadPartition { d1: usize, d2: usize, d: usize },
    #[error("trace is zero")]
    ZeroTrace,
    #[error("insufficient clicks: {got} (need at least {need})")]
    InsufficientClicks { got: u64, need: u64 },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("config parse error{}: {message}", location.map(|(l, c)| format!(" at line {l}, column {c}")).unwrap_or_default())]
    Parse {
        message: String,
        location: Option<(usize, usize)>,
    },
    #[error("config validation error in `{key}`: {constraint}")]
    Validation { key: String, constraint: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TsdError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        TsdError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn validation(key: impl Into<String>, constraint: impl Into<String>) -> Self {
        TsdError::Validation {
            key: key.into(),
            constraint: constraint.into(),
        }
    }
}

pub type Result<T, E = TsdError> = std::result::Result<T, E>;
