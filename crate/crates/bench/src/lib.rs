//! Simulation studies for `givbma`: data-generating processes with known
//! truth, classical and naive-BMA baselines, replicated experiments with
//! aggregate metrics, and a joint-distribution test of the sampler.

pub mod baselines;
pub mod dgp;
pub mod error;
pub mod experiment;
pub mod geweke;
pub mod method;
pub mod metrics;

pub use error::{BenchError, Result};
pub use experiment::{bundled, run_experiment, ExperimentResult, ExperimentSpec};
pub use method::Method;
