use thiserror::Error;

/// Errors raised by the operator algebra and the solvers built on it.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("operator is not self-adjoint (symmetrization residual {residual:.3e} > {tol:.3e})")]
    NotSelfAdjoint { residual: f64, tol: f64 },

    #[error("operator is not positive (min eigenvalue {min_eig:.6e} <= {tol:.3e})")]
    NotPositive { min_eig: f64, tol: f64 },

    #[error("operator inverse is effectively unbounded (condition number {cond:.3e} > {max:.3e})")]
    IllConditioned { cond: f64, max: f64 },

    #[error("step {k}: P({next}) is outside the Riccati domain ({reason})", next = k + 1)]
    Domain { k: usize, reason: String },

    #[error("exhaustive enumeration over 2^{paths_log2} noise paths exceeds the limit 2^{limit_log2}")]
    EnumerationLimit { paths_log2: usize, limit_log2: usize },

    #[error("bisection bracket invalid: {0}")]
    Bracket(String),

    #[error("oracle out of scope: {0}")]
    OracleScope(String),

    #[error("game step {k}: {which} is not positive (min eigenvalue {min_eig:.6e})")]
    GameDomain {
        k: usize,
        which: &'static str,
        min_eig: f64,
    },

    #[error("game step {k}: stacked gain system is singular and the fixed-point fallback did not converge")]
    CouplingSingular { k: usize },

    #[error("no linear feedback reaches the attenuation level: step {k}, {which} min eigenvalue {min_eig:.6e}")]
    DesignInfeasible {
        k: usize,
        which: &'static str,
        min_eig: f64,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{assumption} violated at step {k} (residual {residual:.3e})")]
    Assumption {
        assumption: &'static str,
        k: usize,
        residual: f64,
    },

    #[error("resolution below documented minimum: {0}")]
    Resolution(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
