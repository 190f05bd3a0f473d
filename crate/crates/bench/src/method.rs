//! Estimators an experiment can run, addressed by short names.

use std::fmt;
use std::str::FromStr;

use givbma::priors::{CovPriorSpec, GKind, GPriorSpec};
use givbma::sampler::SamplerConfig;
use serde::{Deserialize, Serialize};

use crate::error::BenchError;

/// Names of estimators compared against in the literature but not implemented here.
pub const OUT_OF_SCOPE: [&str; 6] = ["MATSLS", "sisVIVE", "RJIVE", "Post-Lasso", "BayesHS", "IVBMA"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CovChoice {
    InverseWishart,
    Cholesky { omega_a: f64 },
    /// Inverse-Wishart covariance with the two-component treatment g-prior.
    TwoComponent { c: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Givbma { g: GKind, cov: CovChoice },
    NaiveBma,
    Ols,
    Tsls,
    OracleTsls,
    Jive,
    OutOfScope(String),
}

fn parse_cov(s: &str) -> Option<CovChoice> {
    if s == "iw" {
        return Some(CovChoice::InverseWishart);
    }
    if let Some(w) = s.strip_prefix("chol") {
        let omega_a = if w.is_empty() { 1.0 } else { w.parse().ok()? };
        return (omega_a > 0.0).then_some(CovChoice::Cholesky { omega_a });
    }
    if let Some(c) = s.strip_prefix("2c") {
        let c = if c.is_empty() { 0.5 } else { c.parse().ok()? };
        return (c > 0.0 && c <= 1.0).then_some(CovChoice::TwoComponent { c });
    }
    None
}

impl FromStr for Method {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        if let Some(name) = OUT_OF_SCOPE.iter().find(|n| n.to_ascii_lowercase() == lower) {
            return Ok(Method::OutOfScope(name.to_string()));
        }
        let simple = match lower.as_str() {
            "naive-bma" | "bma" => Some(Method::NaiveBma),
            "ols" => Some(Method::Ols),
            "tsls" => Some(Method::Tsls),
            "o-tsls" => Some(Method::OracleTsls),
            "jive" => Some(Method::Jive),
            "givbma" => Some(Method::Givbma {
                g: GKind::HyperGOverN,
                cov: CovChoice::InverseWishart,
            }),
            _ => None,
        };
        if let Some(m) = simple {
            return Ok(m);
        }
        let unknown = || BenchError::UnknownMethod(s.to_string());
        let rest = lower.strip_prefix("givbma-").ok_or_else(unknown)?;
        let (g, cov) = rest.split_once('-').ok_or_else(unknown)?;
        let g = match g {
            "bric" => GKind::Bric,
            "hgn" => GKind::HyperGOverN,
            _ => return Err(unknown()),
        };
        let cov = parse_cov(cov).ok_or_else(unknown)?;
        if matches!(cov, CovChoice::TwoComponent { .. }) && g == GKind::Bric {
            return Err(unknown());
        }
        Ok(Method::Givbma { g, cov })
    }
}

impl TryFrom<String> for Method {
    type Error = BenchError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.name()
    }
}

impl Method {
    /// Short name that parses back to the same method.
    pub fn name(&self) -> String {
        match self {
            Method::Givbma { g, cov } => {
                let g = match g {
                    GKind::Bric => "bric",
                    GKind::HyperGOverN => "hgn",
                };
                let cov = match cov {
                    CovChoice::InverseWishart => "iw".to_string(),
                    CovChoice::Cholesky { omega_a } => format!("chol{omega_a}"),
                    CovChoice::TwoComponent { c } => format!("2c{c}"),
                };
                format!("givbma-{g}-{cov}")
            }
            Method::NaiveBma => "naive-bma".into(),
            Method::Ols => "ols".into(),
            Method::Tsls => "tsls".into(),
            Method::OracleTsls => "o-tsls".into(),
            Method::Jive => "jive".into(),
            Method::OutOfScope(n) => n.clone(),
        }
    }

    pub fn is_bayesian(&self) -> bool {
        matches!(self, Method::Givbma { .. } | Method::NaiveBma)
    }

    /// Sampler configuration for a gIVBMA variant, on top of `base`.
    pub fn sampler_config(&self, base: &SamplerConfig) -> Option<SamplerConfig> {
        let Method::Givbma { g, cov } = self else {
            return None;
        };
        let gspec = match g {
            GKind::Bric => GPriorSpec::bric(),
            GKind::HyperGOverN => GPriorSpec::hyper_g_n(),
        };
        let mut cfg = base.clone();
        cfg.g_outcome = gspec.clone();
        cfg.g_treatment = gspec;
        cfg.cov_prior = CovPriorSpec::inverse_wishart();
        match *cov {
            CovChoice::InverseWishart => {}
            CovChoice::Cholesky { omega_a } => cfg.cov_prior = CovPriorSpec::cholesky(omega_a),
            CovChoice::TwoComponent { c } => cfg.g_treatment.two_component = Some(c),
        }
        Some(cfg)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Givbma { g, cov } => {
                let g = match g {
                    GKind::Bric => "BRIC",
                    GKind::HyperGOverN => "hyper-g/n",
                };
                match cov {
                    CovChoice::InverseWishart => write!(f, "gIVBMA ({g}, IW)"),
                    CovChoice::Cholesky { omega_a } => write!(f, "gIVBMA ({g}, omega_a = {omega_a})"),
                    CovChoice::TwoComponent { c } => write!(f, "gIVBMA ({g}, 2C c = {c})"),
                }
            }
            Method::NaiveBma => write!(f, "BMA (hyper-g/n)"),
            Method::Ols => write!(f, "OLS"),
            Method::Tsls => write!(f, "TSLS"),
            Method::OracleTsls => write!(f, "O-TSLS"),
            Method::Jive => write!(f, "JIVE"),
            Method::OutOfScope(n) => write!(f, "{n}"),
        }
    }
}
