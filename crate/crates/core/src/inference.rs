//! Posterior summaries and predictive scoring over a finished chain.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conditionals::partition_sigma;
use crate::data::{Dataset, Family, Standardization};
use crate::error::{Error, Result};
use crate::linalg::Spd;
use crate::priors::Equation;
use crate::sampler::{Chain, Draw};
use crate::scalar::Real;
use crate::special::{gauss_hermite_normal, log_mean_exp, log_sum_exp, normal_logpdf};
use crate::ullgm::obs_log_score;

/// Quadrature nodes for a non-Gaussian outcome latent.
pub const OUTCOME_NODES: usize = 64;

/// Posterior inclusion probability of every pool column.
pub fn pip<T: Real>(chain: &Chain<T>, equation: Equation) -> Result<Vec<f64>> {
    let draws = chain.retained_nonempty()?;
    let mut out = vec![0.0; chain.p];
    for d in draws {
        let m = match equation {
            Equation::Outcome => &d.models.outcome,
            Equation::Treatment => &d.models.treatment,
        };
        for (o, &b) in out.iter_mut().zip(m) {
            if b {
                *o += 1.0;
            }
        }
    }
    let s = draws.len() as f64;
    Ok(out.into_iter().map(|c| c / s).collect())
}

/// Empirical pmf of N_Z = |M \ L| over retained draws (length p + 1).
pub fn nz_posterior<T: Real>(chain: &Chain<T>) -> Result<Vec<f64>> {
    let draws = chain.retained_nonempty()?;
    let mut out = vec![0.0; chain.p + 1];
    for d in draws {
        out[d.models.n_instruments()] += 1.0;
    }
    let s = draws.len() as f64;
    Ok(out.into_iter().map(|c| c / s).collect())
}

/// Equal-tailed interval endpoints taken as order statistics of `xs`.
pub fn quantile_interval(xs: &[f64], level: f64) -> (f64, f64) {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |q: f64| v[((v.len() - 1) as f64 * q).round() as usize];
    (at((1.0 - level) / 2.0), at((1.0 + level) / 2.0))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn from_draws(xs: &[f64], level: f64) -> Self {
        let (lower, upper) = quantile_interval(xs, level);
        Self {
            mean: mean(xs),
            lower,
            upper,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// Posterior mean and equal-tailed credible interval of each τ_j.
pub fn tau_summary<T: Real>(chain: &Chain<T>, level: f64) -> Result<Vec<Interval>> {
    let draws = chain.retained_nonempty()?;
    Ok((0..chain.l)
        .map(|j| {
            let xs: Vec<f64> = draws.iter().map(|d| d.tau[j].f64()).collect();
            Interval::from_draws(&xs, level)
        })
        .collect())
}

/// Draw-average of the Gaussian conditional density of τ_j on `grid`.
pub fn rao_blackwell_tau_density<T: Real>(chain: &Chain<T>, j: usize, grid: &[f64]) -> Result<Vec<f64>> {
    let draws = chain.retained_nonempty()?;
    if j >= chain.l {
        return Err(Error::DimensionMismatch(format!("no treatment {j}")));
    }
    let s = draws.len() as f64;
    let mut out = vec![0.0; grid.len()];
    for d in draws {
        let m = d.tau_cond_mean[j].f64();
        let v = d.tau_cond_sd[j].f64().powi(2);
        for (o, &t) in out.iter_mut().zip(grid) {
            *o += normal_logpdf(t, m, v).exp() / s;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSummary {
    /// Σ_{y,x_j} on the reporting scale.
    pub sigma_yx: Vec<Interval>,
    pub a_yx: Vec<Interval>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub level: f64,
    pub draws: usize,
    pub tau: Vec<Interval>,
    pub pip_l: Vec<f64>,
    pub pip_m: Vec<f64>,
    pub nz_posterior: Vec<f64>,
    pub covariance: CovarianceSummary,
}

impl PosteriorSummary {
    /// Summaries on the original measurement scale when `scale` is given.
    pub fn from_chain<T: Real>(chain: &Chain<T>, level: f64, scale: Option<&Standardization>) -> Result<Self> {
        let draws = chain.retained_nonempty()?;
        let l = chain.l;
        let sy = scale.map_or(1.0, |s| s.y.scale);
        let sx: Vec<f64> = (0..l).map(|j| scale.map_or(1.0, |s| s.x[j].scale)).collect();
        let mut tau = vec![Vec::with_capacity(draws.len()); l];
        let mut syx = vec![Vec::with_capacity(draws.len()); l];
        let mut a = vec![Vec::with_capacity(draws.len()); l];
        for d in draws {
            let ay = d.a_yx()?;
            for j in 0..l {
                tau[j].push(d.tau[j].f64() * sy / sx[j]);
                syx[j].push(d.sigma[(0, j + 1)].f64() * sy * sx[j]);
                a[j].push(ay[j].f64() * sy / sx[j]);
            }
        }
        let iv = |v: &Vec<Vec<f64>>| v.iter().map(|xs| Interval::from_draws(xs, level)).collect();
        Ok(Self {
            level,
            draws: draws.len(),
            tau: iv(&tau),
            pip_l: pip(chain, Equation::Outcome)?,
            pip_m: pip(chain, Equation::Treatment)?,
            nz_posterior: nz_posterior(chain)?,
            covariance: CovarianceSummary {
                sigma_yx: iv(&syx),
                a_yx: iv(&a),
            },
        })
    }
}

/// Per-draw quantities reused across predictive evaluations.
struct DrawPredictor {
    alpha: f64,
    tau: DVector<f64>,
    beta: DVector<f64>,
    gamma: DVector<f64>,
    delta: DMatrix<f64>,
    a_yx: DVector<f64>,
    sigma_y_given_x: f64,
    r_y: Option<f64>,
    r_x: Vec<Option<f64>>,
    latent: Option<LatentTreatments>,
}

/// Conditional law of the non-Gaussian treatment latents given the Gaussian
/// treatment residuals: mean = coef · h_G, covariance = factor factorᵀ.
struct LatentTreatments {
    cols: Vec<usize>,
    gauss: Vec<usize>,
    coef: DMatrix<f64>,
    factor: DMatrix<f64>,
    nodes: Vec<(f64, Vec<f64>)>,
}

fn tensor_nodes(dim: usize) -> Result<Vec<(f64, Vec<f64>)>> {
    let k = match dim {
        1 => 64,
        2 => 16,
        3 => 8,
        _ => {
            return Err(Error::Unsupported(format!(
                "predictive quadrature over {dim} non-Gaussian treatments"
            )))
        }
    };
    let (x, w) = gauss_hermite_normal(k);
    let mut out = vec![(0.0, Vec::new())];
    for _ in 0..dim {
        let mut next = Vec::with_capacity(out.len() * k);
        for (lw, pt) in &out {
            for i in 0..k {
                let mut p = pt.clone();
                p.push(x[i]);
                next.push((lw + w[i].ln(), p));
            }
        }
        out = next;
    }
    Ok(out)
}

fn sub(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

impl DrawPredictor {
    fn new<T: Real>(d: &Draw<T>, x_families: &[Family]) -> Result<Self> {
        let cv = |v: &DVector<T>| v.map(|x| x.f64());
        let part = partition_sigma(&d.sigma)?;
        let sigma_xx = part.sigma_xx.map(|x| x.f64());
        let cols: Vec<usize> = (0..x_families.len()).filter(|&j| !x_families[j].is_gaussian()).collect();
        let gauss: Vec<usize> = (0..x_families.len()).filter(|&j| x_families[j].is_gaussian()).collect();
        let latent = if cols.is_empty() {
            None
        } else {
            let snn = sub(&sigma_xx, &cols, &cols);
            let (coef, cond) = if gauss.is_empty() {
                (DMatrix::zeros(cols.len(), 0), snn)
            } else {
                let sgg = Spd::new(&sub(&sigma_xx, &gauss, &gauss))?;
                let sng = sub(&sigma_xx, &cols, &gauss);
                let coef = sgg.solve_mat(&sng.transpose()).transpose();
                let cond = &snn - &coef * sng.transpose();
                (coef, cond)
            };
            Some(LatentTreatments {
                factor: Spd::new(&cond)?.l(),
                nodes: tensor_nodes(cols.len())?,
                cols,
                gauss,
                coef,
            })
        };
        Ok(Self {
            alpha: d.alpha.f64(),
            tau: cv(&d.tau),
            beta: cv(&d.beta),
            gamma: cv(&d.gamma),
            delta: d.delta.map(|x| x.f64()),
            a_yx: cv(&part.a_yx),
            sigma_y_given_x: part.sigma_y_given_x.f64(),
            r_y: d.r_y.map(|r| r.f64()),
            r_x: d.r_x.iter().map(|r| r.map(|v| v.f64())).collect(),
            latent,
        })
    }

    fn outcome_logdensity(&self, family: Family, y: f64, mean: f64, gh: &(Vec<f64>, Vec<f64>)) -> Result<f64> {
        if family.is_gaussian() {
            return Ok(normal_logpdf(y, mean, self.sigma_y_given_x));
        }
        let sd = self.sigma_y_given_x.sqrt();
        let terms: Vec<f64> = gh
            .0
            .iter()
            .zip(&gh.1)
            .map(|(t, w)| Ok(w.ln() + obs_log_score(family, y, mean + sd * t, self.r_y)?))
            .collect::<Result<_>>()?;
        Ok(log_sum_exp(&terms))
    }

    fn logdensity(
        &self,
        y_family: Family,
        x_families: &[Family],
        y: f64,
        x: &DVector<f64>,
        z: &DVector<f64>,
        gh: &(Vec<f64>, Vec<f64>),
    ) -> Result<f64> {
        let mu_x = &self.gamma + self.delta.tr_mul(z);
        let base = self.alpha + x.dot(&self.tau) + z.dot(&self.beta);
        let mut h = x - &mu_x;
        let Some(lat) = &self.latent else {
            return self.outcome_logdensity(y_family, y, base + h.dot(&self.a_yx), gh);
        };
        let h_g = DVector::from_iterator(lat.gauss.len(), lat.gauss.iter().map(|&j| h[j]));
        let cond_mean = &lat.coef * h_g;
        let mut joint = Vec::with_capacity(lat.nodes.len());
        let mut marg = Vec::with_capacity(lat.nodes.len());
        for (lw, t) in &lat.nodes {
            let hn = &cond_mean + &lat.factor * DVector::from_column_slice(t);
            let mut w = *lw;
            for (k, &j) in lat.cols.iter().enumerate() {
                h[j] = hn[k];
                w += obs_log_score(x_families[j], x[j], mu_x[j] + hn[k], self.r_x[j])?;
            }
            marg.push(w);
            joint.push(w + self.outcome_logdensity(y_family, y, base + h.dot(&self.a_yx), gh)?);
        }
        let marg = log_sum_exp(&marg);
        if marg == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(log_sum_exp(&joint) - marg)
    }
}

/// Scores new rows against a chain: log of the draw-averaged density of y
/// given the row's treatments and pool values.
pub struct Predictive {
    y_family: Family,
    x_families: Vec<Family>,
    l: usize,
    p: usize,
    draws: Vec<DrawPredictor>,
    gh: (Vec<f64>, Vec<f64>),
}

impl Predictive {
    pub fn new<T: Real>(chain: &Chain<T>) -> Result<Self> {
        let draws = chain
            .retained_nonempty()?
            .iter()
            .map(|d| DrawPredictor::new(d, &chain.x_families))
            .collect::<Result<_>>()?;
        Ok(Self {
            y_family: chain.y_family,
            x_families: chain.x_families.clone(),
            l: chain.l,
            p: chain.p,
            draws,
            gh: gauss_hermite_normal(OUTCOME_NODES),
        })
    }

    pub fn logdensity(&self, y: f64, x: &DVector<f64>, z: &DVector<f64>) -> Result<f64> {
        if x.len() != self.l || z.len() != self.p {
            return Err(Error::DimensionMismatch(format!(
                "row has {} treatments and {} pool columns, chain has {} and {}",
                x.len(),
                z.len(),
                self.l,
                self.p
            )));
        }
        if !(y.is_finite() && x.iter().all(|v| v.is_finite()) && z.iter().all(|v| v.is_finite())) {
            return Err(Error::Numerical {
                iteration: 0,
                detail: "non-finite predictive row".into(),
            });
        }
        let per: Vec<f64> = self
            .draws
            .iter()
            .map(|d| d.logdensity(self.y_family, &self.x_families, y, x, z, &self.gh))
            .collect::<Result<_>>()?;
        Ok(log_mean_exp(&per))
    }

    /// Log predictive density of every row of `holdout`.
    pub fn row_logdensities<T: Real>(&self, holdout: &Dataset<T>) -> Result<Vec<f64>> {
        if holdout.l() != self.l
            || holdout.p() != self.p
            || holdout.y_family() != self.y_family
            || holdout.x_families() != self.x_families.as_slice()
        {
            return Err(Error::Schema("holdout schema does not match the fitted data".into()));
        }
        if holdout.n() == 0 {
            return Err(Error::Schema("holdout has no rows".into()));
        }
        (0..holdout.n())
            .map(|i| {
                let x = holdout.x().row(i).transpose().map(|v| v.f64());
                let z = holdout.z().row(i).transpose().map(|v| v.f64());
                self.logdensity(holdout.y()[i].f64(), &x, &z)
            })
            .collect()
    }
}

pub fn predictive_logdensity<T: Real>(chain: &Chain<T>, y: f64, x: &DVector<f64>, z: &DVector<f64>) -> Result<f64> {
    Predictive::new(chain)?.logdensity(y, x, z)
}

/// Log predictive score: mean negative log predictive density over holdout rows.
pub fn lps<T: Real>(chain: &Chain<T>, holdout: &Dataset<T>) -> Result<f64> {
    let rows = Predictive::new(chain)?.row_logdensities(holdout)?;
    Ok(-rows.iter().sum::<f64>() / rows.len() as f64)
}
