//! Classical IV estimators and outcome-only BMA.

use givbma::linalg::{Qr, Spd};
use givbma::priors::{hyper_gn_logpdf, model_log_prior, GKind, GPriorSpec};
use givbma::special::{log_mean_exp, normal_logpdf};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{BenchError, Result};

/// Normal 97.5% quantile used for classical 95% intervals.
pub const Z975: f64 = 1.959_963_984_540_054;

/// Point estimate with covariance and residual variance of a linear outcome fit.
#[derive(Clone, Debug)]
pub struct Estimate {
    pub coef: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub sigma2: f64,
}

impl Estimate {
    pub fn interval(&self, j: usize) -> (f64, f64) {
        let se = self.cov[(j, j)].sqrt();
        (self.coef[j] - Z975 * se, self.coef[j] + Z975 * se)
    }

    /// Log outcome density at the point estimate, for one design row.
    pub fn logdensity(&self, y: f64, u_row: &DVector<f64>) -> f64 {
        normal_logpdf(y, u_row.dot(&self.coef), self.sigma2)
    }
}

pub fn with_intercept(cols: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n = cols[0].nrows();
    let k: usize = cols.iter().map(|m| m.ncols()).sum();
    let mut out = DMatrix::from_element(n, 1 + k, 1.0);
    let mut at = 1;
    for m in cols {
        out.columns_mut(at, m.ncols()).copy_from(m);
        at += m.ncols();
    }
    out
}

pub fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

fn solve_spd(a: &DMatrix<f64>, what: &str) -> Result<Spd<f64>> {
    Spd::new(a).map_err(|_| BenchError::Singular(what.into()))
}

pub fn ols(y: &DVector<f64>, u: &DMatrix<f64>) -> Result<Estimate> {
    let (n, k) = u.shape();
    let qr = Qr::new(u).map_err(|_| BenchError::Singular("UᵀU".into()))?;
    let coef = qr.least_squares(y);
    let sigma2 = (y - u * &coef).norm_squared() / (n - k) as f64;
    let cov = solve_spd(&u.tr_mul(u), "UᵀU")?.inverse() * sigma2;
    Ok(Estimate { coef, cov, sigma2 })
}

/// ρ̂ = (UᵀP_V U)⁻¹UᵀP_V y with var σ̂²(UᵀP_V U)⁻¹, σ̂² = ‖y − Uρ̂‖²/(n − k_U).
pub fn tsls(y: &DVector<f64>, u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<Estimate> {
    let (n, ku) = u.shape();
    let kv = v.ncols();
    if kv < ku {
        return Err(BenchError::OrderCondition {
            instruments: kv,
            regressors: ku,
        });
    }
    let qv = Qr::new(v).map_err(|_| BenchError::Singular("VᵀV".into()))?;
    let qu = qv.qt_mat(u);
    let qy = qv.qt_vec(y);
    let a = solve_spd(&qu.tr_mul(&qu), "UᵀP_V U")?;
    let coef = a.solve(&qu.tr_mul(&qy));
    let sigma2 = (y - u * &coef).norm_squared() / (n - ku) as f64;
    Ok(Estimate {
        cov: a.inverse() * sigma2,
        coef,
        sigma2,
    })
}

/// Leave-one-out first-stage fits of every column of `u`:
/// row i = V_i (V(i)ᵀV(i))⁻¹ V(i)ᵀ U(i).
pub fn jackknife_fits(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, kv) = v.shape();
    if n <= kv + 1 {
        return Err(BenchError::Spec(format!("JIVE needs n > k_V + 1, got n = {n}, k_V = {kv}")));
    }
    let gram = solve_spd(&v.tr_mul(v), "VᵀV")?;
    let fitted = v * gram.solve_mat(&v.tr_mul(u));
    let mut out = DMatrix::zeros(n, u.ncols());
    for i in 0..n {
        let vi = v.row(i).transpose();
        let h = vi.dot(&gram.solve(&vi));
        if 1.0 - h < 1e-10 {
            return Err(BenchError::Leverage(i));
        }
        for j in 0..u.ncols() {
            out[(i, j)] = (fitted[(i, j)] - h * u[(i, j)]) / (1.0 - h);
        }
    }
    Ok(out)
}

/// JIVE1 with just-identified IV standard errors using the jackknife fits as instruments.
pub fn jive(y: &DVector<f64>, u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<Estimate> {
    let (n, ku) = u.shape();
    if v.ncols() < ku {
        return Err(BenchError::OrderCondition {
            instruments: v.ncols(),
            regressors: ku,
        });
    }
    let uh = jackknife_fits(u, v)?;
    let a = uh.tr_mul(u);
    let lu = a.clone().lu();
    let coef = lu
        .solve(&uh.tr_mul(y))
        .ok_or_else(|| BenchError::Singular("ÛᵀU".into()))?;
    let sigma2 = (y - u * &coef).norm_squared() / (n - ku) as f64;
    let a_inv = lu.try_inverse().ok_or_else(|| BenchError::Singular("ÛᵀU".into()))?;
    let cov = &a_inv * uh.tr_mul(&uh) * a_inv.transpose() * sigma2;
    Ok(Estimate { coef, cov, sigma2 })
}

/// Outcome-only BMA over pool subsets: g-prior on the slopes, flat priors on the
/// intercept and residual variance, single-flip model composition. Treatments
/// are in every model.
#[derive(Clone, Debug)]
pub struct NaiveBma {
    /// Rao-Blackwellized posterior mean of τ (model-conditional means averaged).
    pub tau_mean: DVector<f64>,
    /// Posterior draws of τ, one per retained iteration.
    pub tau_draws: Vec<DVector<f64>>,
    pub pip: Vec<f64>,
    draws: Vec<(f64, DVector<f64>, f64, Vec<usize>)>,
}

struct Centered {
    yc: DVector<f64>,
    ybar: f64,
    xc: DMatrix<f64>,
    xbar: DVector<f64>,
}

fn center(y: &DVector<f64>, x: &DMatrix<f64>) -> Centered {
    let ybar = y.mean();
    let xbar = DVector::from_fn(x.ncols(), |j, _| x.column(j).mean());
    let mut xc = x.clone();
    for j in 0..x.ncols() {
        xc.column_mut(j).add_scalar_mut(-xbar[j]);
    }
    Centered {
        yc: y.add_scalar(-ybar),
        ybar,
        xc,
        xbar,
    }
}

struct ModelFit {
    shrunk: DVector<f64>,
    qr: Qr<f64>,
    ssr: f64,
}

impl NaiveBma {
    /// `x` holds the treatments (always included), `pool` the candidate columns.
    pub fn fit(
        y: &DVector<f64>,
        x: &DMatrix<f64>,
        pool: &DMatrix<f64>,
        gprior: &GPriorSpec,
        iterations: usize,
        burn_in: usize,
        seed: u64,
    ) -> Result<Self> {
        let n = y.len();
        let (l, p) = (x.ncols(), pool.ncols());
        let c = center(y, &hcat(x, pool));
        let total = c.yc.norm_squared();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let model_fit = |cols: &[usize], g: f64| -> Result<ModelFit> {
            let idx: Vec<usize> = (0..l).chain(cols.iter().map(|&j| l + j)).collect();
            let xm = c.xc.select_columns(&idx);
            let qr = Qr::new(&xm).map_err(|_| BenchError::Singular("naive BMA design".into()))?;
            let shrink = g / (1.0 + g);
            let ssr = total - shrink * qr.proj_norm2(&c.yc);
            Ok(ModelFit {
                shrunk: qr.least_squares(&c.yc) * shrink,
                qr,
                ssr,
            })
        };
        let log_ml = |k: usize, ssr: f64, g: f64| -0.5 * k as f64 * g.ln_1p() - 0.5 * (n - 1) as f64 * ssr.ln();
        let m = p as f64 / 2.0;
        let mut g = match gprior.kind {
            GKind::Bric => (n as f64).max(((p + l) * (p + l)) as f64),
            GKind::HyperGOverN => n as f64,
        };
        let mut incl = vec![false; p];
        let mut cols: Vec<usize> = Vec::new();
        let mut cur = model_fit(&cols, g)?;
        let mut g_scale: f64 = 1.0;
        let mut out = Self {
            tau_mean: DVector::zeros(l),
            tau_draws: Vec::new(),
            pip: vec![0.0; p],
            draws: Vec::new(),
        };
        for it in 0..iterations {
            if p > 0 {
                let j = rng.random_range(0..p);
                let mut prop_incl = incl.clone();
                prop_incl[j] = !prop_incl[j];
                let prop_cols: Vec<usize> = (0..p).filter(|&k| prop_incl[k]).collect();
                if let Ok(prop) = model_fit(&prop_cols, g) {
                    let lr = log_ml(l + prop_cols.len(), prop.ssr, g) - log_ml(l + cols.len(), cur.ssr, g)
                        + model_log_prior(prop_cols.len(), p, m)
                        - model_log_prior(cols.len(), p, m);
                    if rng.random::<f64>().ln() < lr {
                        incl = prop_incl;
                        cols = prop_cols;
                        cur = prop;
                    }
                }
            }
            if gprior.kind == GKind::HyperGOverN {
                let k = l + cols.len();
                let pn2 = cur.qr.proj_norm2(&c.yc);
                let target = |g: f64| -> f64 {
                    let ssr = total - g / (1.0 + g) * pn2;
                    log_ml(k, ssr, g) + hyper_gn_logpdf(g, n, gprior.a).unwrap_or(f64::NEG_INFINITY) + g.ln()
                };
                let z: f64 = rng.sample(StandardNormal);
                let prop = g * (g_scale * z).exp();
                let acc = (target(prop) - target(g)).min(0.0).exp();
                if rng.random::<f64>() < acc {
                    g = prop;
                    cur = model_fit(&cols, g)?;
                }
                if it < burn_in {
                    g_scale = (g_scale.ln() + ((it + 1) as f64).powf(-0.6) * (acc - 0.234)).exp();
                }
            }
            if it < burn_in {
                continue;
            }
            let k = l + cols.len();
            let shrink = g / (1.0 + g);
            let s2 = 1.0 / Gamma::new((n - 1) as f64 / 2.0, 2.0 / cur.ssr).expect("valid shape").sample(&mut rng);
            let zv = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
            let coef = &cur.shrunk + cur.qr.solve_r(&zv) * (s2 * shrink).sqrt();
            let idx: Vec<usize> = (0..l).chain(cols.iter().map(|&j| l + j)).collect();
            let xbar = DVector::from_fn(k, |i, _| c.xbar[idx[i]]);
            let alpha = c.ybar - xbar.dot(&coef) + (s2 / n as f64).sqrt() * rng.sample::<f64, _>(StandardNormal);
            out.tau_mean += cur.shrunk.rows(0, l);
            out.tau_draws.push(coef.rows(0, l).into_owned());
            for &j in &cols {
                out.pip[j] += 1.0;
            }
            out.draws.push((alpha, coef, s2, cols.clone()));
        }
        let s = out.draws.len().max(1) as f64;
        out.tau_mean /= s;
        out.pip.iter_mut().for_each(|v| *v /= s);
        Ok(out)
    }

    /// Log of the draw-averaged outcome density of a new row.
    pub fn logdensity(&self, y: f64, x: &DVector<f64>, pool: &DVector<f64>) -> f64 {
        let l = x.len();
        let per: Vec<f64> = self
            .draws
            .iter()
            .map(|(alpha, coef, s2, cols)| {
                let mut mean = alpha + x.dot(&coef.rows(0, l));
                for (k, &j) in cols.iter().enumerate() {
                    mean += coef[l + k] * pool[j];
                }
                normal_logpdf(y, mean, *s2)
            })
            .collect();
        log_mean_exp(&per)
    }
}
