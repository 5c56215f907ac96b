use thiserror::Error;

/// Errors surfaced by the estimation, testing and pipeline layers.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A run configuration is inconsistent before any computation starts.
    #[error("configuration error: {0}")]
    Config(String),

    /// The least-squares design does not have full column rank.
    #[error("rank-deficient design, offending columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    /// The conditional information matrix is numerically singular.
    #[error("information matrix is numerically singular (condition estimate {cond:.3e})")]
    SingularInformation { cond: f64 },

    /// The operation is not defined for the requested model.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// An input file failed to parse. Rows count from 1.
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    /// A fit required by the caller did not converge.
    #[error("fit did not converge: {0}")]
    NonConverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
