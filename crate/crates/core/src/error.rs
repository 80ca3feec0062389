use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid plant: {0}")]
    InvalidPlant(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: String,
        expected: String,
        found: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("state penalty Q must be symmetric positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("{what} diverged: not stabilizable or tolerance unreachable")]
    Diverged { what: &'static str },

    #[error("closed loop is unstable (spectral radius {spectral_radius})")]
    Unstable { spectral_radius: f64 },

    #[error("pair violates its support at {count} entries (largest {largest:e})")]
    SupportViolation { count: usize, largest: f64 },

    #[error("realization undefined: {0}")]
    Realization(String),

    #[error("memory patch underrun at node {node}: source {source_node} needed at lag {lag}, patch holds lags {min_lag}..={max_lag}")]
    MemoryUnderrun {
        node: usize,
        source_node: usize,
        lag: usize,
        min_lag: usize,
        max_lag: usize,
    },

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn dim_err(context: impl Into<String>, expected: impl ToString, found: impl ToString) -> Error {
    Error::Dimension {
        context: context.into(),
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
