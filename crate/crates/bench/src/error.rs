use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] givbma::Error),
    #[error("method `{0}` is not implemented: out of scope for this library")]
    OutOfScope(String),
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("order condition fails: {instruments} first-stage columns for {regressors} regressors")]
    OrderCondition { instruments: usize, regressors: usize },
    #[error("singular {0}")]
    Singular(String),
    #[error("leave-one-out fit undefined: row {0} has leverage 1")]
    Leverage(usize),
    #[error("experiment spec: {0}")]
    Spec(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;
