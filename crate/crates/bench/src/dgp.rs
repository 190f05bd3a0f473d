//! Synthetic data-generating processes with their truth records.

use givbma::data::{ColumnNames, Dataset, Family};
use givbma::dist::std_normal_matrix;
use givbma::linalg::Spd;
use givbma::special::logistic;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreatmentFamily {
    Gaussian,
    Poisson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DgpKind {
    InvalidInstruments { s: usize },
    MultipleEndogenous,
    ManyWeak { r2f: f64, treatment: TreatmentFamily },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    #[serde(flatten)]
    pub kind: DgpKind,
    pub n: usize,
    pub replications: usize,
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
}

fn default_holdout() -> f64 {
    0.2
}

pub const INVALID_P: usize = 10;
pub const MULTEND_P: usize = 15;
pub const WEAK_INSTRUMENTS: usize = 20;
pub const WEAK_COVARIATES: usize = 10;

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::Spec(m));
        if self.n < 10 {
            return bad(format!("n = {} is too small", self.n));
        }
        if self.replications == 0 {
            return bad("replications must be positive".into());
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad(format!("holdout_fraction {} outside [0, 1)", self.holdout_fraction));
        }
        match self.kind {
            DgpKind::InvalidInstruments { s } if s > INVALID_P => bad(format!("s = {s} exceeds p = {INVALID_P}")),
            DgpKind::ManyWeak { r2f, .. } if !(r2f > 0.0 && r2f < 1.0) => bad(format!("R2f = {r2f} outside (0, 1)")),
            _ => Ok(()),
        }
    }

    pub fn holdout_rows(&self) -> usize {
        (self.n as f64 * self.holdout_fraction).round() as usize
    }

    /// Draw one training set and holdout from a shared truth.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Replication {
        let (n, m) = (self.n, self.holdout_rows());
        match self.kind {
            DgpKind::InvalidInstruments { s } => invalid_instruments(n, m, s, rng),
            DgpKind::MultipleEndogenous => multiple_endogenous(n, m, rng),
            DgpKind::ManyWeak { r2f, treatment } => many_weak(n, m, r2f, treatment, rng),
        }
    }
}

/// Parameters behind one simulated dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Truth {
    pub alpha: f64,
    pub tau: Vec<f64>,
    /// Outcome coefficients on the pool.
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Treatment coefficients on the pool, p × l.
    pub delta: DMatrix<f64>,
    /// Joint covariance of (ε, H).
    pub sigma: DMatrix<f64>,
    pub outcome_model: Vec<bool>,
    pub treatment_model: Vec<bool>,
    /// Pool columns that are instruments (the rest are exogenous covariates).
    pub instruments: Vec<bool>,
    /// Population first-stage R² the design was calibrated to, if any.
    pub r2_first_stage: Option<f64>,
}

impl Truth {
    pub fn l(&self) -> usize {
        self.tau.len()
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    /// Instruments that enter the treatment model and not the outcome model.
    pub fn valid_instruments(&self) -> Vec<bool> {
        (0..self.p())
            .map(|j| self.treatment_model[j] && !self.outcome_model[j])
            .collect()
    }

    pub fn n_valid(&self) -> usize {
        self.valid_instruments().iter().filter(|&&b| b).count()
    }

    /// Realized first-stage R² of treatment `j`: var(Z_I δ_I) / (var(Z_I δ_I) + var(h))
    /// over the instrument columns, given the latent treatment matrix.
    pub fn realized_r2(&self, z: &DMatrix<f64>, q: &DMatrix<f64>, j: usize) -> f64 {
        let n = z.nrows();
        let mut signal = DVector::zeros(n);
        let mut mean = DVector::from_element(n, self.gamma[j]);
        for k in 0..self.p() {
            let col = z.column(k) * self.delta[(k, j)];
            if self.instruments[k] {
                signal += &col;
            }
            mean += col;
        }
        let h = q.column(j) - mean;
        let var = |v: &DVector<f64>| {
            let m = v.mean();
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64
        };
        let vs = var(&signal);
        vs / (vs + var(&h))
    }
}

#[derive(Clone, Debug)]
pub struct Replication {
    pub train: Dataset<f64>,
    pub holdout: Dataset<f64>,
    pub truth: Truth,
    /// Latent treatments of the training rows (equal to X for Gaussian columns).
    pub train_latent: DMatrix<f64>,
}

/// Solve r2(c) = target for c > 0 by bisection; r2 must be increasing in c.
pub fn calibrate(target: f64, r2: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    while r2(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if r2(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn sigma_half() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])
}

/// Rows of jointly Gaussian (ε, H) with covariance `sigma`.
fn errors<R: Rng + ?Sized>(n: usize, sigma: &DMatrix<f64>, rng: &mut R) -> DMatrix<f64> {
    let l = Spd::new(sigma).expect("error covariance is positive definite").l();
    std_normal_matrix::<f64, _>(n, sigma.nrows(), rng) * l.transpose()
}

struct Draws {
    y: DVector<f64>,
    x: DMatrix<f64>,
    q: DMatrix<f64>,
}

/// y = α + Xτ + Zβ + ε, Q = γ + ZΔ + H, with X observed from Q per family.
fn outcome_and_treatments<R: Rng + ?Sized>(
    t: &Truth,
    z: &DMatrix<f64>,
    families: &[Family],
    rng: &mut R,
) -> Draws {
    let n = z.nrows();
    let l = t.l();
    let e = errors(n, &t.sigma, rng);
    let mut q = z * &t.delta + e.columns(1, l);
    for j in 0..l {
        q.column_mut(j).add_scalar_mut(t.gamma[j]);
    }
    let mut x = q.clone();
    for j in 0..l {
        for i in 0..n {
            x[(i, j)] = match families[j] {
                Family::Gaussian => q[(i, j)],
                Family::PoissonLogNormal => {
                    let rate = q[(i, j)].exp().min(1e12);
                    if rate > 0.0 {
                        Poisson::new(rate).expect("positive rate").sample(rng)
                    } else {
                        0.0
                    }
                }
                Family::BetaLogistic => beta_draw(logistic(q[(i, j)]), 1.0, rng),
            };
        }
    }
    let beta = DVector::from_column_slice(&t.beta);
    let tau = DVector::from_column_slice(&t.tau);
    let y = DVector::from_element(n, t.alpha) + &x * tau + z * beta + e.column(0);
    Draws { y, x, q }
}

/// Beta draw with mean `mu` and dispersion `r`; values that round to the bounds
/// are returned as exactly 0 or 1 so they are treated as set observations.
fn beta_draw<R: Rng + ?Sized>(mu: f64, r: f64, rng: &mut R) -> f64 {
    let a = (mu * r).max(1e-300);
    let b = ((1.0 - mu) * r).max(1e-300);
    let v: f64 = Beta::new(a, b).expect("positive shapes").sample(rng);
    if v.is_nan() {
        if mu < 0.5 {
            0.0
        } else {
            1.0
        }
    } else {
        v.clamp(0.0, 1.0)
    }
}

fn build<R: Rng + ?Sized>(
    t: &Truth,
    n: usize,
    m: usize,
    pool: impl Fn(usize, &mut dyn FnMut() -> DMatrix<f64>) -> DMatrix<f64>,
    families: Vec<Family>,
    fixed: Vec<bool>,
    rng: &mut R,
) -> Replication {
    let make = |rows: usize, rng: &mut R, check: bool| {
        let mut base = || std_normal_matrix::<f64, _>(rows, t.p(), rng);
        let z = pool(rows, &mut base);
        let d = outcome_and_treatments(t, &z, &families, rng);
        let names = ColumnNames::default_for(t.l(), t.p());
        let data = if check {
            Dataset::with_names(d.y, d.x, z, Family::Gaussian, families.clone(), fixed.clone(), names)
        } else {
            Dataset::unchecked(d.y, d.x, z, Family::Gaussian, families.clone(), fixed.clone(), names)
        };
        (data.expect("simulated data satisfy the schema"), d.q)
    };
    let (train, train_latent) = make(n, rng, true);
    let (holdout, _) = make(m, rng, false);
    Replication {
        train,
        holdout,
        truth: t.clone(),
        train_latent,
    }
}

pub fn invalid_instruments<R: Rng + ?Sized>(n: usize, holdout: usize, s: usize, rng: &mut R) -> Replication {
    let p = INVALID_P;
    let sigma = sigma_half();
    let sxx = sigma[(1, 1)];
    let r2f = 0.2;
    let c = calibrate(r2f, |c| p as f64 * c * c / (p as f64 * c * c + sxx));
    let truth = Truth {
        alpha: 0.0,
        tau: vec![0.1],
        beta: (0..p).map(|j| if j < s { 1.0 } else { 0.0 }).collect(),
        gamma: vec![0.0],
        delta: DMatrix::from_element(p, 1, c),
        sigma,
        outcome_model: (0..p).map(|j| j < s).collect(),
        treatment_model: vec![true; p],
        instruments: vec![true; p],
        r2_first_stage: Some(r2f),
    };
    build(&truth, n, holdout, |_, base| base(), vec![Family::Gaussian], vec![false; p], rng)
}

/// Loadings of Z₁₁..Z₁₅ on Z₁..Z₅.
pub const MULTEND_LOADINGS: [f64; 5] = [0.3, 0.5, 0.7, 0.9, 1.1];

pub fn multiple_endogenous<R: Rng + ?Sized>(n: usize, holdout: usize, rng: &mut R) -> Replication {
    let p = MULTEND_P;
    let c: f64 = 2.0 / 3.0;
    let sigma = DMatrix::from_fn(3, 3, |i, j| c.powi((i as i32 - j as i32).abs()));
    let mut delta = DMatrix::zeros(p, 2);
    for (k, row) in [(0, [2.0, -2.0]), (4, [-1.0, 1.0]), (6, [1.5, 1.0]), (10, [1.0, 1.0]), (12, [0.5, -0.5])] {
        delta[(k, 0)] = row[0];
        delta[(k, 1)] = row[1];
    }
    let treatment_model = (0..p).map(|k| delta[(k, 0)] != 0.0).collect();
    let truth = Truth {
        alpha: 1.0,
        tau: vec![0.5, -0.5],
        beta: vec![0.0; p],
        gamma: vec![4.0, -1.0],
        delta,
        sigma,
        outcome_model: vec![false; p],
        treatment_model,
        instruments: vec![true; p],
        r2_first_stage: None,
    };
    let pool = |rows: usize, base: &mut dyn FnMut() -> DMatrix<f64>| {
        let mut z = base();
        for i in 0..rows {
            let common: f64 = (0..5).map(|k| z[(i, k)] * MULTEND_LOADINGS[k]).sum();
            for k in 10..15 {
                // the base draw in these columns serves as the independent error
                z[(i, k)] += common;
            }
        }
        z
    };
    build(
        &truth,
        n,
        holdout,
        pool,
        vec![Family::Gaussian, Family::BetaLogistic],
        vec![false; p],
        rng,
    )
}

/// Relevant-instrument shape (1 − i/(p₁/2 + 1))⁴ for i = 1..p₁/2.
pub fn weak_shape(p1: usize) -> Vec<f64> {
    let half = p1 / 2;
    (1..=half).map(|i| (1.0 - i as f64 / (half as f64 + 1.0)).powi(4)).collect()
}

pub fn many_weak<R: Rng + ?Sized>(
    n: usize,
    holdout: usize,
    r2f: f64,
    treatment: TreatmentFamily,
    rng: &mut R,
) -> Replication {
    let (p1, p2) = (WEAK_INSTRUMENTS, WEAK_COVARIATES);
    let p = p1 + p2;
    let sigma = sigma_half();
    let sxx = sigma[(1, 1)];
    let shape = weak_shape(p1);
    let ss: f64 = shape.iter().map(|v| v * v).sum();
    let c = calibrate(r2f, |c| c * c * ss / (c * c * ss + sxx));
    // column k (0-based) has 1-based index k + 1; even indices are scaled by 100
    let scale = |k: usize| if (k + 1).is_multiple_of(2) { 100.0 } else { 1.0 };
    let mut delta = DMatrix::zeros(p, 1);
    let mut beta = vec![0.0; p];
    for (i, s) in shape.iter().enumerate() {
        delta[(i, 0)] = c * s / scale(i);
    }
    for w in 0..p2 / 2 {
        let coef = if (w + 1) % 2 == 1 { 0.1 } else { 0.001 };
        delta[(p1 + w, 0)] = coef;
        beta[p1 + w] = coef;
    }
    let truth = Truth {
        alpha: 0.0,
        tau: vec![0.1],
        outcome_model: beta.iter().map(|&b| b != 0.0).collect(),
        treatment_model: (0..p).map(|k| delta[(k, 0)] != 0.0).collect(),
        beta,
        gamma: vec![0.0],
        delta,
        sigma,
        instruments: (0..p).map(|k| k < p1).collect(),
        r2_first_stage: Some(r2f),
    };
    let pool = |_: usize, base: &mut dyn FnMut() -> DMatrix<f64>| {
        let mut z = base();
        for k in 0..p {
            let s = if k < p1 { scale(k) } else { scale(k - p1) };
            z.column_mut(k).scale_mut(s);
        }
        z
    };
    let family = match treatment {
        TreatmentFamily::Gaussian => Family::Gaussian,
        TreatmentFamily::Poisson => Family::PoissonLogNormal,
    };
    let fixed = (0..p).map(|k| k < p1).collect();
    build(&truth, n, holdout, pool, vec![family], fixed, rng)
}
