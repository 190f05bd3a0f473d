use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::priors::{CovPriorSpec, GPriorSpec, ModelPriorSpec};
use crate::scalar::Real;

/// How Σ is drawn each sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceUpdate {
    /// Exact full conditional, including the g-prior factors that scale with Σ.
    #[default]
    Exact,
    /// Conjugate update from the residuals alone.
    Verbatim,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub g_outcome: GPriorSpec,
    #[serde(default)]
    pub g_treatment: GPriorSpec,
    #[serde(default)]
    pub cov_prior: CovPriorSpec,
    #[serde(default)]
    pub model_prior: ModelPriorSpec,
    #[serde(default)]
    pub covariance_update: CovarianceUpdate,
    #[serde(default)]
    pub seed: u64,
    /// ChaCha stream; separates chains that share a seed.
    #[serde(default)]
    pub stream: u64,
    /// Drop the data from model and g moves, leaving the prior as target.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub prior_only: bool,
}

fn default_iterations() -> usize {
    5000
}

fn default_burn_in() -> usize {
    500
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: default_iterations(),
            burn_in: default_burn_in(),
            g_outcome: GPriorSpec::default(),
            g_treatment: GPriorSpec::default(),
            cov_prior: CovPriorSpec::default(),
            model_prior: ModelPriorSpec::default(),
            covariance_update: CovarianceUpdate::default(),
            seed: 0,
            stream: 0,
            prior_only: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate<T: Real>(&self, d: &Dataset<T>) -> Result<()> {
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return Err(Error::InvalidHyperparameter(format!(
                "need 0 <= burn_in < iterations, got burn_in = {}, iterations = {}",
                self.burn_in, self.iterations
            )));
        }
        self.g_outcome.validate()?;
        self.g_treatment.validate()?;
        if self.g_outcome.two_component.is_some() {
            return Err(Error::InvalidHyperparameter(
                "the two-component prior applies to the treatment equation only".into(),
            ));
        }
        if self.g_treatment.two_component.is_some() && d.l() != 1 {
            return Err(Error::Unsupported(
                "the two-component prior has no closed-form conditional posterior for l > 1".into(),
            ));
        }
        self.cov_prior.validate(d.l())?;
        self.model_prior.resolve(d.outcome_eligible().len(), d.p())?;
        Ok(())
    }
}
