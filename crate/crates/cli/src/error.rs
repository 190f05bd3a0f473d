use std::fmt;
use std::path::Path;

use givbma::Error;
use givbma_bench::BenchError;

/// Process exit codes.
pub const CONFIG: u8 = 2;
pub const DATA: u8 = 3;
pub const NUMERICAL: u8 = 4;
pub const OTHER: u8 = 1;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(CONFIG, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(DATA, message)
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new(OTHER, format!("{}: {e}", path.display()))
    }

    /// Errors raised while reading or validating input data.
    pub fn from_data(e: Error) -> Self {
        match e {
            Error::Numerical { .. } => Self::new(NUMERICAL, e.to_string()),
            Error::InvalidHyperparameter(_) | Error::Unsupported(_) => Self::config(e.to_string()),
            e => Self::data(e.to_string()),
        }
    }

    /// Errors raised while sampling or post-processing.
    pub fn from_run(e: Error) -> Self {
        match e {
            Error::Numerical { .. } | Error::RankDeficient(_) | Error::EmptyChain => Self::new(NUMERICAL, e.to_string()),
            e => Self::from_data(e),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::OutOfScope(_) | BenchError::UnknownMethod(_) | BenchError::Spec(_) => Self::config(e.to_string()),
            BenchError::Core(e) => Self::from_run(e),
            BenchError::Io { .. } | BenchError::Csv(_) => Self::new(OTHER, e.to_string()),
            e => Self::new(NUMERICAL, e.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_code_map() {
        let numerical = Error::Numerical {
            iteration: 12,
            detail: "non-finite".into(),
        };
        let e = CliError::from_run(numerical);
        assert_eq!(e.code, NUMERICAL);
        assert!(e.message.contains("iteration 12"));
        assert_eq!(CliError::from_run(Error::MissingColumn("z".into())).code, DATA);
        assert_eq!(CliError::from_data(Error::InvalidHyperparameter("a".into())).code, CONFIG);
        assert_eq!(CliError::from(BenchError::OutOfScope("sisVIVE".into())).code, CONFIG);
        assert_eq!(CliError::from(BenchError::Core(Error::RankDeficient("V".into()))).code, NUMERICAL);
    }
}
