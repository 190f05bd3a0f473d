use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("non-numeric cell in column `{column}` at row {row}: {value:?}")]
    NonNumeric {
        column: String,
        row: usize,
        value: String,
    },
    #[error("family violation in column `{column}` at row {row}: {detail}")]
    FamilyViolation {
        column: String,
        row: usize,
        detail: String,
    },
    #[error("rank-deficient {0}")]
    RankDeficient(String),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("numerical failure at iteration {iteration}: {detail}")]
    Numerical { iteration: usize, detail: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("chain has no retained draws")]
    EmptyChain,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn numerical(detail: impl Into<String>) -> Self {
        Error::Numerical {
            iteration: 0,
            detail: detail.into(),
        }
    }

    /// Stamp a numerical failure with the Gibbs iteration that produced it.
    pub fn at_iteration(self, it: usize) -> Self {
        match self {
            Error::Numerical { detail, .. } => Error::Numerical {
                iteration: it,
                detail,
            },
            Error::RankDeficient(what) => Error::Numerical {
                iteration: it,
                detail: format!("rank-deficient {what}"),
            },
            other => other,
        }
    }
}
