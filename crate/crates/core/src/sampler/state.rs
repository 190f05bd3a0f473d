use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::adapt::AdaptiveScale;
use crate::conditionals::partition_sigma;
use crate::data::{Dataset, Family, ModelPair};
use crate::error::{Error, Result};
use crate::priors::{bric_g, Equation, NuPrior};
use crate::scalar::Real;
use crate::special::logit;
use crate::ullgm::SET_WIDTH;

use super::SamplerConfig;

/// Full sampler state, latents included.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterState<T: Real> {
    pub alpha: T,
    pub tau: DVector<T>,
    pub beta: DVector<T>,
    pub gamma: DVector<T>,
    pub delta: DMatrix<T>,
    pub sigma: DMatrix<T>,
    pub q: DVector<T>,
    pub q_mat: DMatrix<T>,
    pub r_y: Option<T>,
    pub r_x: Vec<Option<T>>,
    pub g_l: T,
    pub g_m: T,
    pub nu: T,
    pub models: ModelPair,
}

impl<T: Real> ParameterState<T> {
    pub fn validate(&self, d: &Dataset<T>) -> Result<()> {
        let (n, l, p) = (d.n(), d.l(), d.p());
        let dims = self.tau.len() == l
            && self.beta.len() == p
            && self.gamma.len() == l
            && self.delta.shape() == (p, l)
            && self.sigma.shape() == (l + 1, l + 1)
            && self.q.len() == n
            && self.q_mat.shape() == (n, l)
            && self.r_x.len() == l
            && self.models.outcome.len() == p
            && self.models.treatment.len() == p;
        if !dims {
            return Err(Error::DimensionMismatch("initial state does not match the dataset".into()));
        }
        self.models.check_mask(d.fixed_mask())?;
        partition_sigma(&self.sigma)?;
        let bad = |m: &str| Err(Error::InvalidHyperparameter(m.to_string()));
        for j in 0..p {
            if !self.models.outcome[j] && self.beta[j] != T::zero() {
                return bad("beta must be zero outside the outcome model");
            }
            if !self.models.treatment[j] && self.delta.row(j).iter().any(|v| *v != T::zero()) {
                return bad("delta rows must be zero outside the treatment model");
            }
        }
        if !(self.g_l > T::zero() && self.g_m > T::zero()) {
            return bad("g must be positive");
        }
        if !(self.nu > T::usize(l)) {
            return bad("nu must exceed l");
        }
        if d.y_family().has_dispersion() != self.r_y.is_some() {
            return bad("outcome dispersion must be set exactly for Beta outcomes");
        }
        for j in 0..l {
            if d.x_families()[j].has_dispersion() != self.r_x[j].is_some() {
                return bad("treatment dispersion must be set exactly for Beta treatments");
            }
        }
        Ok(())
    }

    /// ρ = (α, τ, β_L) in design order.
    pub fn rho(&self) -> DVector<T> {
        let mut v = vec![self.alpha];
        v.extend(self.tau.iter().copied());
        v.extend((0..self.beta.len()).filter(|&j| self.models.outcome[j]).map(|j| self.beta[j]));
        DVector::from_vec(v)
    }

    /// Λ = [Γ; Δ_M] in design order.
    pub fn lambda(&self) -> DMatrix<T> {
        let rows: Vec<usize> = (0..self.delta.nrows()).filter(|&j| self.models.treatment[j]).collect();
        let l = self.gamma.len();
        let mut m = DMatrix::zeros(1 + rows.len(), l);
        m.row_mut(0).copy_from(&self.gamma.transpose());
        for (k, &j) in rows.iter().enumerate() {
            m.row_mut(k + 1).copy_from(&self.delta.row(j));
        }
        m
    }

    pub(crate) fn set_rho(&mut self, rho: &DVector<T>) {
        let l = self.tau.len();
        self.alpha = rho[0];
        self.tau.copy_from(&rho.rows(1, l));
        self.beta.fill(T::zero());
        let mut k = 1 + l;
        for j in 0..self.beta.len() {
            if self.models.outcome[j] {
                self.beta[j] = rho[k];
                k += 1;
            }
        }
    }

    pub(crate) fn set_lambda(&mut self, lambda: &DMatrix<T>) {
        self.gamma.copy_from(&lambda.row(0).transpose());
        self.delta.fill(T::zero());
        let mut k = 1;
        for j in 0..self.delta.nrows() {
            if self.models.treatment[j] {
                self.delta.row_mut(j).copy_from(&lambda.row(k));
                k += 1;
            }
        }
    }
}

/// Default starting point: zero coefficients, Σ = I, empty models, g at the
/// benchmark value, ν = l + 2 unless fixed, latents from a link transform of the
/// data, dispersions 1.
pub fn initialize_state<T: Real>(d: &Dataset<T>, cfg: &SamplerConfig) -> ParameterState<T> {
    let (n, l, p) = (d.n(), d.l(), d.p());
    let latent = |fam: Family, v: T| -> T {
        match fam {
            Family::Gaussian => v,
            Family::PoissonLogNormal => (v + T::half()).ln(),
            Family::BetaLogistic => {
                let e = T::lit(SET_WIDTH / 2.0);
                logit(v.max(e).min(T::one() - e))
            }
        }
    };
    let q = d.y().map(|v| latent(d.y_family(), v));
    let mut q_mat = d.x().clone();
    for j in 0..l {
        let fam = d.x_families()[j];
        q_mat.column_mut(j).apply(|v| *v = latent(fam, *v));
    }
    let disp = |fam: Family| fam.has_dispersion().then(T::one);
    let nu = match cfg.cov_prior.nu_prior {
        NuPrior::Fixed { value } => T::lit(value),
        NuPrior::ShiftedExponential => T::usize(l + 2),
    };
    ParameterState {
        alpha: T::zero(),
        tau: DVector::zeros(l),
        beta: DVector::zeros(p),
        gamma: DVector::zeros(l),
        delta: DMatrix::zeros(p, l),
        sigma: DMatrix::identity(l + 1, l + 1),
        q,
        q_mat,
        r_y: disp(d.y_family()),
        r_x: d.x_families().iter().map(|f| disp(*f)).collect(),
        g_l: T::lit(bric_g(n, p, l, Equation::Outcome)),
        g_m: T::lit(bric_g(n, p, l, Equation::Treatment)),
        nu,
        models: ModelPair::empty(p),
    }
}

/// Accepted/attempted counts for one move type.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveCounter {
    pub accepted: u64,
    pub attempted: u64,
}

impl MoveCounter {
    pub fn record(&mut self, accepted: bool) {
        self.attempted += 1;
        if accepted {
            self.accepted += 1;
        }
    }

    pub fn rate(&self) -> f64 {
        if self.attempted == 0 {
            0.0
        } else {
            self.accepted as f64 / self.attempted as f64
        }
    }
}

fn summarize(scales: &[AdaptiveScale]) -> Option<LatentSummary> {
    if scales.is_empty() {
        return None;
    }
    let k = scales.len() as f64;
    Some(LatentSummary {
        mean_acceptance: scales.iter().map(|s| s.acceptance_rate()).sum::<f64>() / k,
        mean_log_scale: scales.iter().map(|s| s.log_scale).sum::<f64>() / k,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentSummary {
    pub mean_acceptance: f64,
    pub mean_log_scale: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MhDiagnostics {
    pub model_l: MoveCounter,
    pub model_m: MoveCounter,
    /// Proposals rejected because the design lost full column rank.
    pub rank_rejections: u64,
    pub g_l: Option<AdaptiveScale>,
    pub g_m: Option<AdaptiveScale>,
    pub nu: Option<AdaptiveScale>,
    pub latent_y: Option<LatentSummary>,
    pub latent_x: Vec<Option<LatentSummary>>,
    pub dispersion_y: Option<AdaptiveScale>,
    pub dispersion_x: Vec<Option<AdaptiveScale>>,
}

impl MhDiagnostics {
    pub(crate) fn latent_summaries(y: &[AdaptiveScale], x: &[Vec<AdaptiveScale>]) -> (Option<LatentSummary>, Vec<Option<LatentSummary>>) {
        (summarize(y), x.iter().map(|s| summarize(s)).collect())
    }
}

/// One stored draw. Latents are not stored.
#[derive(Clone, Debug, PartialEq)]
pub struct Draw<T: Real> {
    pub alpha: T,
    pub tau: DVector<T>,
    pub beta: DVector<T>,
    pub gamma: DVector<T>,
    pub delta: DMatrix<T>,
    pub sigma: DMatrix<T>,
    pub g_l: T,
    pub g_m: T,
    pub nu: T,
    pub r_y: Option<T>,
    pub r_x: Vec<Option<T>>,
    pub models: ModelPair,
    /// Mean and sd of the Gaussian conditional of each τ_j at the ρ step.
    pub tau_cond_mean: DVector<T>,
    pub tau_cond_sd: DVector<T>,
}

impl<T: Real> Draw<T> {
    pub(crate) fn from_state(s: &ParameterState<T>, tau_cond_mean: DVector<T>, tau_cond_sd: DVector<T>) -> Self {
        Self {
            alpha: s.alpha,
            tau: s.tau.clone(),
            beta: s.beta.clone(),
            gamma: s.gamma.clone(),
            delta: s.delta.clone(),
            sigma: s.sigma.clone(),
            g_l: s.g_l,
            g_m: s.g_m,
            nu: s.nu,
            r_y: s.r_y,
            r_x: s.r_x.clone(),
            models: s.models.clone(),
            tau_cond_mean,
            tau_cond_sd,
        }
    }

    /// a_yx = Σ_yx Σ_xx⁻¹.
    pub fn a_yx(&self) -> Result<DVector<T>> {
        Ok(partition_sigma(&self.sigma)?.a_yx)
    }
}

#[derive(Clone, Debug)]
pub struct Chain<T: Real> {
    /// Every iteration, burn-in included.
    pub draws: Vec<Draw<T>>,
    pub burn_in: usize,
    pub seed: u64,
    pub stream: u64,
    pub diagnostics: MhDiagnostics,
    pub l: usize,
    pub p: usize,
    pub y_family: Family,
    pub x_families: Vec<Family>,
}

impl<T: Real> Chain<T> {
    pub fn retained(&self) -> &[Draw<T>] {
        &self.draws[self.burn_in.min(self.draws.len())..]
    }

    pub fn retained_nonempty(&self) -> Result<&[Draw<T>]> {
        let r = self.retained();
        if r.is_empty() {
            Err(Error::EmptyChain)
        } else {
            Ok(r)
        }
    }
}
