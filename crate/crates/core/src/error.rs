use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library and CLI can report.
///
/// Variants are grouped by how a caller should react; [`Error::exit_code`]
/// maps each group onto the CLI's process exit status.
#[derive(Debug, Error)]
pub enum Error {
    /// A point fell outside the interval a function is defined on.
    #[error("domain error: {what} = {value} is outside {interval}")]
    Domain {
        what: &'static str,
        value: f64,
        interval: &'static str,
    },

    /// Inconsistent or unsupported configuration (basis, threshold rule, DGP).
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data that violates the model's support assumptions.
    #[error("validation error: {0}")]
    Validation(String),

    /// Bad argument to an otherwise well-configured call.
    #[error("argument error: {0}")]
    Argument(String),

    /// Malformed CSV input.
    #[error("parse error on line {line}: {message}")]
    Parse { line: u64, message: String },

    /// The empirical Gram matrix is numerically singular.
    #[error(
        "degenerate design: Gram matrix condition number {condition:.3e} exceeds {limit:.0e}; \
         the basis second-moment matrix must have eigenvalues bounded away from zero"
    )]
    DegenerateDesign { condition: f64, limit: f64 },

    /// Too few observations for the requested fit.
    #[error("design error: {0}")]
    Design(String),

    /// Plug-in variance of the linearised statistic is too small to self-normalise.
    #[error("variance floor: Var_n(Z) = {variance:.3e} is below {floor:.0e}")]
    VarianceFloor { variance: f64, floor: f64 },

    /// Adaptive quadrature did not reach the requested tolerance.
    #[error(
        "quadrature did not converge: achieved error {achieved:.3e}, requested {requested:.1e}"
    )]
    Quadrature { achieved: f64, requested: f64 },

    /// A numerical identity that must hold failed to hold.
    #[error("numerical check failed: {0}")]
    Numerical(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// CLI exit status: 1 validation/configuration, 2 numerical, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain { .. }
            | Error::Config(_)
            | Error::Validation(_)
            | Error::Argument(_)
            | Error::Parse { .. } => 1,
            Error::DegenerateDesign { .. }
            | Error::Design(_)
            | Error::VarianceFloor { .. }
            | Error::Quadrature { .. }
            | Error::Numerical(_) => 2,
            Error::Io { .. } => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
