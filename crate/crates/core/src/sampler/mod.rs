//! The Gibbs sampler: latent update, outcome block, treatment block, then ν and Σ.

mod config;
mod gibbs;
mod state;

pub use config::{CovarianceUpdate, SamplerConfig};
pub use gibbs::{mh_update_nu, propose_model_flip, run_gibbs, run_gibbs_from, Gibbs};
pub use state::{initialize_state, Chain, Draw, MhDiagnostics, MoveCounter, ParameterState};
