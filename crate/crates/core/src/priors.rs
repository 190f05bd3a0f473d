//! Prior densities and their hyperparameter specifications.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conditionals::partition_sigma;
use crate::dist::{ig_logpdf, iw_logpdf};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::special::{ln_choose, ln_gamma, log_sum_exp, normal_logpdf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Equation {
    Outcome,
    Treatment,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GKind {
    Bric,
    HyperGOverN,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GPriorSpec {
    pub kind: GKind,
    /// hyper-g/n shape.
    #[serde(default = "default_a")]
    pub a: f64,
    /// Ratio c = g_I / g_C of the two-component treatment prior.
    #[serde(default)]
    pub two_component: Option<f64>,
}

fn default_a() -> f64 {
    3.0
}

impl Default for GPriorSpec {
    fn default() -> Self {
        Self::hyper_g_n()
    }
}

impl GPriorSpec {
    pub fn bric() -> Self {
        Self {
            kind: GKind::Bric,
            a: default_a(),
            two_component: None,
        }
    }

    pub fn hyper_g_n() -> Self {
        Self {
            kind: GKind::HyperGOverN,
            a: default_a(),
            two_component: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 2.0) {
            return Err(Error::InvalidHyperparameter(format!("hyper-g/n needs a > 2, got {}", self.a)));
        }
        if let Some(c) = self.two_component {
            if !(c > 0.0 && c <= 1.0) {
                return Err(Error::InvalidHyperparameter(format!(
                    "two-component ratio must lie in (0, 1], got {c}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_random(&self) -> bool {
        self.kind == GKind::HyperGOverN
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NuPrior {
    Fixed { value: f64 },
    /// Unit-scale Exponential shifted by l + 1.
    ShiftedExponential,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovKind {
    InverseWishart,
    Cholesky,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovPriorSpec {
    pub kind: CovKind,
    /// Prior variance of each component of a_yx (Cholesky kind).
    #[serde(default = "default_omega")]
    pub omega_a: f64,
    /// IG shape for σ_{y|x}; ν/2 when unset.
    #[serde(default)]
    pub c_shape: Option<f64>,
    /// IG scale for σ_{y|x}; 1/2 when unset.
    #[serde(default)]
    pub d_scale: Option<f64>,
    /// IW degrees of freedom for Σ_xx; ν − 1 when unset.
    #[serde(default)]
    pub xi: Option<f64>,
    #[serde(default = "default_nu_prior")]
    pub nu_prior: NuPrior,
}

fn default_omega() -> f64 {
    1.0
}

fn default_nu_prior() -> NuPrior {
    NuPrior::ShiftedExponential
}

impl Default for CovPriorSpec {
    fn default() -> Self {
        Self::inverse_wishart()
    }
}

impl CovPriorSpec {
    pub fn inverse_wishart() -> Self {
        Self {
            kind: CovKind::InverseWishart,
            omega_a: default_omega(),
            c_shape: None,
            d_scale: None,
            xi: None,
            nu_prior: NuPrior::ShiftedExponential,
        }
    }

    pub fn cholesky(omega_a: f64) -> Self {
        Self {
            kind: CovKind::Cholesky,
            omega_a,
            ..Self::inverse_wishart()
        }
    }

    pub fn c_shape(&self, nu: f64) -> f64 {
        self.c_shape.unwrap_or(nu / 2.0)
    }

    pub fn d_scale(&self) -> f64 {
        self.d_scale.unwrap_or(0.5)
    }

    pub fn xi(&self, nu: f64) -> f64 {
        self.xi.unwrap_or(nu - 1.0)
    }

    pub fn validate(&self, l: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidHyperparameter(m));
        if !(self.omega_a > 0.0) {
            return bad(format!("omega_a must be positive, got {}", self.omega_a));
        }
        if let Some(xi) = self.xi {
            if !(xi > l as f64 - 1.0) {
                return bad(format!("xi must exceed l - 1, got {xi}"));
            }
        }
        if matches!(self.c_shape, Some(c) if !(c > 0.0)) || matches!(self.d_scale, Some(d) if !(d > 0.0)) {
            return bad("inverse-gamma hyperparameters must be positive".into());
        }
        if let NuPrior::Fixed { value } = self.nu_prior {
            if !(value > l as f64) {
                return bad(format!("fixed nu must exceed l = {l}, got {value}"));
            }
            if self.kind == CovKind::Cholesky && self.xi.is_none() && !(value - 1.0 > l as f64 - 1.0) {
                return bad("default xi = nu - 1 is too small".into());
            }
        }
        Ok(())
    }
}

/// Prior mean model sizes; unset values default to half the eligible columns.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPriorSpec {
    #[serde(default)]
    pub m_l: Option<f64>,
    #[serde(default)]
    pub m_m: Option<f64>,
}

impl ModelPriorSpec {
    pub fn resolve(&self, eligible_l: usize, eligible_m: usize) -> Result<(f64, f64)> {
        let pick = |m: Option<f64>, p: usize, name: &str| -> Result<f64> {
            let v = m.unwrap_or(p as f64 / 2.0);
            if p > 0 && !(v > 0.0 && v < p as f64) {
                return Err(Error::InvalidHyperparameter(format!(
                    "{name} must lie in (0, {p}), got {v}"
                )));
            }
            Ok(v)
        };
        Ok((pick(self.m_l, eligible_l, "m_l")?, pick(self.m_m, eligible_m, "m_m")?))
    }
}

/// Benchmark g: max{n, (p+l+1)²} for the outcome, max{n, (p+1)²} for the treatment.
pub fn bric_g(n: usize, p: usize, l: usize, equation: Equation) -> f64 {
    let k = match equation {
        Equation::Outcome => p + l + 1,
        Equation::Treatment => p + 1,
    };
    (n as f64).max((k * k) as f64)
}

/// log density of the hyper-g/n prior, (a−2)/(2n) (1 + g/n)^{−a/2}.
pub fn hyper_gn_logpdf<T: Real>(g: T, n: usize, a: T) -> Result<T> {
    if !(a > T::two()) {
        return Err(Error::InvalidHyperparameter(format!("hyper-g/n needs a > 2, got {a}")));
    }
    if g < T::zero() {
        return Ok(T::neg_infinity());
    }
    let nt = T::usize(n);
    Ok(((a - T::two()) / (T::two() * nt)).ln() - a * T::half() * (g / nt).ln_1p())
}

/// Inverse-CDF draw from the hyper-g/n prior.
pub fn sample_hyper_gn<R: Rng + ?Sized>(n: usize, a: f64, rng: &mut R) -> f64 {
    let u: f64 = f64::open01(rng);
    n as f64 * (u.powf(1.0 / (1.0 - a / 2.0)) - 1.0)
}

fn beta_binomial_b(p: usize, m: f64) -> f64 {
    (p as f64 - m) / m
}

/// log prior probability of one particular model with k of p columns included,
/// under the Beta-binomial prior with a = 1 and b = (p − m)/m.
pub fn model_log_prior<T: Real>(k: usize, p: usize, m: T) -> T {
    if p == 0 {
        return T::zero();
    }
    let a = T::one();
    let b = (T::usize(p) - m) / m;
    ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + ln_gamma(a + T::usize(k)) + ln_gamma(b + T::usize(p - k))
        - ln_gamma(a + b + T::usize(p))
}

/// Draw an inclusion vector over `eligible` positions of a length-p mask.
pub fn sample_model_prior<R: Rng + ?Sized>(p: usize, eligible: &[usize], m: f64, rng: &mut R) -> Vec<bool> {
    let mut v = vec![false; p];
    if eligible.is_empty() {
        return v;
    }
    let w = f64::beta(1.0, beta_binomial_b(eligible.len(), m), rng);
    for &j in eligible {
        v[j] = f64::open01(rng) < w;
    }
    v
}

/// Largest p accepted by [`nz_prior_pmf`].
pub const NZ_MAX_P: usize = 20;

/// Prior pmf of N_Z = |M \ L| over 0..=p.
///
/// Sizes |L| = a and |M| = b are Beta-binomial; given the sizes both models are
/// uniform subsets, so |M ∩ L| is hypergeometric. Everything is in log space.
pub fn nz_prior_pmf(p: usize, m_l: f64, m_m: f64) -> Result<Vec<f64>> {
    if p == 0 || p > NZ_MAX_P {
        return Err(Error::InvalidHyperparameter(format!(
            "p must lie in 1..={NZ_MAX_P}, got {p}"
        )));
    }
    for (name, m) in [("m_l", m_l), ("m_m", m_m)] {
        if !(m > 0.0 && m < p as f64) {
            return Err(Error::InvalidHyperparameter(format!("{name} must lie in (0, {p}), got {m}")));
        }
    }
    let size_lp = |m: f64| -> Vec<f64> {
        (0..=p)
            .map(|k| ln_choose(p, k) + model_log_prior(k, p, m))
            .collect()
    };
    let pl = size_lp(m_l);
    let pm = size_lp(m_m);
    let mut terms: Vec<Vec<f64>> = vec![Vec::new(); p + 1];
    for a in 0..=p {
        for b in 0..=p {
            let base = pl[a] + pm[b] - ln_choose(p, b);
            // N_Z = k needs k columns of M outside L and b − k inside.
            for k in 0..=b.min(p - a) {
                if b - k > a {
                    continue;
                }
                terms[k].push(base + ln_choose(p - a, k) + ln_choose(a, b - k));
            }
        }
    }
    Ok(terms.iter().map(|t| log_sum_exp(t).exp()).collect())
}

/// log prior of ν: unit Exponential shifted to start at l + 1.
pub fn nu_log_prior<T: Real>(nu: T, l: usize) -> T {
    let shift = T::usize(l + 1);
    if nu < shift {
        T::neg_infinity()
    } else {
        -(nu - shift)
    }
}

/// log prior density of Σ given ν. For the Cholesky kind this is the density of
/// the components (a_yx, σ_{y|x}, Σ_xx), which differs from a density over Σ by a
/// ν-free Jacobian.
pub fn sigma_log_prior<T: Real>(sigma: &DMatrix<T>, spec: &CovPriorSpec, nu: T) -> Result<T> {
    let k = sigma.nrows();
    match spec.kind {
        CovKind::InverseWishart => iw_logpdf(sigma, nu, &DMatrix::identity(k, k)),
        CovKind::Cholesky => {
            let part = partition_sigma(sigma)?;
            let nu64 = nu.f64();
            let om = T::lit(spec.omega_a);
            let la = part
                .a_yx
                .iter()
                .fold(T::zero(), |acc, &a| acc + normal_logpdf(a, T::zero(), om));
            let ls = ig_logpdf(part.sigma_y_given_x, T::lit(spec.c_shape(nu64)), T::lit(spec.d_scale()));
            let lx = iw_logpdf(&part.sigma_xx, T::lit(spec.xi(nu64)), &DMatrix::identity(k - 1, k - 1))?;
            Ok(la + ls + lx)
        }
    }
}
