//! Bayesian model averaging over instrument and covariate sets in
//! instrumental-variable models, with Gaussian and latent-Gaussian
//! (Poisson log-normal, Beta logistic) outcomes and treatments.
//!
//! The numerical core is generic over the scalar type; the `*64` aliases
//! below fix it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod chain_io;
pub mod conditionals;
pub mod data;
pub mod dist;
pub mod error;
pub mod fit;
pub mod inference;
pub mod linalg;
pub mod priors;
pub mod sampler;
pub mod scalar;
pub mod special;
pub mod ullgm;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Dataset64 = data::Dataset<f64>;
pub type State64 = sampler::ParameterState<f64>;
pub type Draw64 = sampler::Draw<f64>;
pub type Chain64 = sampler::Chain<f64>;
pub type Gibbs64 = sampler::Gibbs<f64>;
pub type Fit64 = fit::Fit<f64>;
