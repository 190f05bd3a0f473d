//! Standardize, sample, and report on the original measurement scale.

use crate::data::{standardize, Dataset, Standardization};
use crate::error::Result;
use crate::inference::{rao_blackwell_tau_density, PosteriorSummary, Predictive};
use crate::sampler::{run_gibbs, Chain, SamplerConfig};
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct Fit<T: Real> {
    /// Draws on the standardized scale.
    pub chain: Chain<T>,
    pub standardization: Standardization,
}

pub fn fit<T: Real>(data: &Dataset<T>, cfg: &SamplerConfig) -> Result<Fit<T>> {
    let (std_data, standardization) = standardize(data);
    let chain = run_gibbs(&std_data, cfg)?;
    Ok(Fit { chain, standardization })
}

impl<T: Real> Fit<T> {
    pub fn summary(&self, level: f64) -> Result<PosteriorSummary> {
        PosteriorSummary::from_chain(&self.chain, level, Some(&self.standardization))
    }

    fn tau_factor(&self, j: usize) -> f64 {
        self.standardization.tau_to_original(j, 1.0)
    }

    /// Rao-Blackwellized density of τ_j on an original-scale grid.
    pub fn tau_density(&self, j: usize, grid: &[f64]) -> Result<Vec<f64>> {
        let c = self.tau_factor(j);
        let inner: Vec<f64> = grid.iter().map(|t| t / c).collect();
        Ok(rao_blackwell_tau_density(&self.chain, j, &inner)?
            .into_iter()
            .map(|v| v / c.abs())
            .collect())
    }

    /// Per-row log predictive densities of raw holdout rows, in raw outcome units.
    pub fn row_logdensities(&self, holdout: &Dataset<T>) -> Result<Vec<f64>> {
        let scaled = self.standardization.apply(holdout)?;
        let jac = self.standardization.outcome_log_jacobian();
        Ok(Predictive::new(&self.chain)?
            .row_logdensities(&scaled)?
            .into_iter()
            .map(|v| v + jac)
            .collect())
    }

    pub fn lps(&self, holdout: &Dataset<T>) -> Result<f64> {
        let rows = self.row_logdensities(holdout)?;
        Ok(-rows.iter().sum::<f64>() / rows.len() as f64)
    }
}
