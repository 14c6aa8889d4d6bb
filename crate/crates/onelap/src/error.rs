use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation error: {0}")]
    Validation(String),

    /// The decreasing envelope never drops below the required threshold, so
    /// no bridge point s2 exists. Either the grid tail is too short or the
    /// limit of h at infinity is too large for the requested s1.
    #[error(
        "envelope never small enough: min hbar {min_hbar:.6e} >= threshold {threshold:.6e}; \
         extend the grid tail or lower s1 (h(infinity) may be too large)"
    )]
    EnvelopeTooLarge { threshold: f64, min_hbar: f64 },

    #[error("{context}: no convergence after {iterations} iterations (residual {residual:.3e})")]
    Convergence {
        context: String,
        iterations: usize,
        residual: f64,
        /// Last iterate, so callers can inspect or continue from it.
        last_iterate: Vec<f64>,
    },

    #[error("certificate invalid: {0}")]
    Certificate(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status associated with this error kind.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_)
            | Error::Domain(_)
            | Error::Validation(_)
            | Error::EnvelopeTooLarge { .. }
            | Error::InsufficientData(_) => 2,
            Error::Convergence { .. } => 3,
            Error::Certificate(_) => 4,
            Error::Io(_) => 1,
        }
    }

    /// Short machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "parameter",
            Error::Domain(_) => "domain",
            Error::Validation(_) => "validation",
            Error::EnvelopeTooLarge { .. } => "envelope-too-large",
            Error::Convergence { .. } => "convergence",
            Error::Certificate(_) => "certificate",
            Error::InsufficientData(_) => "insufficient-data",
            Error::Io(_) => "io",
        }
    }
}
