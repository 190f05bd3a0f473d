//! Joint-distribution test of the Gaussian sampler. Forward simulation of
//! (θ, data) is compared with a chain that alternates Gibbs sweeps with
//! data refreshes; both target the same joint law.

use givbma::adapt::accept_prob;
use givbma::conditionals::partition_sigma;
use givbma::data::{outcome_design, treatment_design, Dataset, Family, ModelPair};
use givbma::dist::{sample_iw, std_normal_matrix, std_normal_vector};
use givbma::linalg::Qr;
use givbma::priors::{bric_g, sample_hyper_gn, sample_model_prior, Equation, GKind, GPriorSpec, ModelPriorSpec};
use givbma::sampler::{CovarianceUpdate, Gibbs, ParameterState, SamplerConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::error::Result;

#[derive(Clone, Debug)]
pub struct GewekeConfig {
    pub n: usize,
    pub p: usize,
    /// Forward draws, and Gibbs sweeps in the successive-conditional chain.
    pub iterations: usize,
    pub batches: usize,
    pub g: GKind,
    pub update: CovarianceUpdate,
    pub seed: u64,
}

impl Default for GewekeConfig {
    fn default() -> Self {
        Self {
            n: 20,
            p: 2,
            iterations: 200_000,
            batches: 40,
            g: GKind::HyperGOverN,
            update: CovarianceUpdate::Exact,
            seed: 2024,
        }
    }
}

pub const FEATURES: [&str; 8] = [
    "atan(alpha)",
    "atan(tau)",
    "ln sigma_yy",
    "corr(y, x)",
    "ln g_l",
    "ln g_m",
    "ln(nu - 2)",
    "model size",
];

#[derive(Clone, Debug, Serialize)]
pub struct FeatureComparison {
    pub feature: &'static str,
    pub forward_mean: f64,
    pub gibbs_mean: f64,
    /// Combined standard error; the chain part uses batch means.
    pub se: f64,
}

impl FeatureComparison {
    /// Standardized difference; zero for a feature constant at one value under both.
    pub fn z(&self) -> f64 {
        let diff = self.forward_mean - self.gibbs_mean;
        if self.se == 0.0 && diff == 0.0 {
            return 0.0;
        }
        diff / self.se
    }
}

struct Harness<'a> {
    cfg: &'a GewekeConfig,
    z: DMatrix<f64>,
    gspec: GPriorSpec,
    m: f64,
}

impl Harness<'_> {
    /// Draw H, X = VΛ + H, then y = Uρ + ε with ε | H ~ N(Hw, σ_{y|x}). ρ is
    /// drawn from its g-prior given X when `draw_rho` is set.
    fn simulate_data(
        &self,
        s: &mut ParameterState<f64>,
        draw_rho: bool,
        rng: &mut ChaCha20Rng,
    ) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let n = self.cfg.n;
        let part = partition_sigma(&s.sigma).ok()?;
        let v = treatment_design(&self.z, &s.models.treatment);
        let lxx = part.sigma_xx_factor().l();
        let h = std_normal_matrix::<f64, _>(n, 1, rng) * lxx.transpose();
        let x = &v * s.lambda() + &h;
        let u = outcome_design(&x, &self.z, &s.models.outcome);
        let qr = Qr::new(&u).ok()?;
        if draw_rho {
            let zr: DVector<f64> = std_normal_vector(qr.ncols(), rng);
            let rho = qr.solve_r(&zr) * (s.g_l * part.sigma_y_given_x).sqrt();
            set_rho(s, &rho);
        }
        let eps = &h * &part.a_yx + std_normal_vector::<f64, _>(n, rng) * part.sigma_y_given_x.sqrt();
        let y = u * s.rho() + eps;
        Some((y, x))
    }

    fn g_pair(&self, rng: &mut ChaCha20Rng) -> (f64, f64) {
        let (n, p) = (self.cfg.n, self.cfg.p);
        match self.cfg.g {
            GKind::Bric => (bric_g(n, p, 1, Equation::Outcome), bric_g(n, p, 1, Equation::Treatment)),
            GKind::HyperGOverN => (sample_hyper_gn(n, self.gspec.a, rng), sample_hyper_gn(n, self.gspec.a, rng)),
        }
    }

    fn forward(&self, rng: &mut ChaCha20Rng) -> (ParameterState<f64>, DVector<f64>, DMatrix<f64>) {
        let (n, p) = (self.cfg.n, self.cfg.p);
        let eligible: Vec<usize> = (0..p).collect();
        loop {
            let e: f64 = Exp1.sample(rng);
            let nu = 2.0 + e;
            let sigma = sample_iw(nu, &DMatrix::identity(2, 2), rng).expect("identity scale");
            let (g_l, g_m) = self.g_pair(rng);
            let models = ModelPair {
                outcome: sample_model_prior(p, &eligible, self.m, rng),
                treatment: sample_model_prior(p, &eligible, self.m, rng),
            };
            let v = treatment_design(&self.z, &models.treatment);
            let Ok(qv) = Qr::new(&v) else { continue };
            let zl: DVector<f64> = std_normal_vector(v.ncols(), rng);
            let lambda = qv.solve_r(&zl) * (g_m * sigma[(1, 1)]).sqrt();
            let mut s = ParameterState {
                alpha: 0.0,
                tau: DVector::zeros(1),
                beta: DVector::zeros(p),
                gamma: DVector::zeros(1),
                delta: DMatrix::zeros(p, 1),
                sigma,
                q: DVector::zeros(n),
                q_mat: DMatrix::zeros(n, 1),
                r_y: None,
                r_x: vec![None],
                g_l,
                g_m,
                nu,
                models,
            };
            s.gamma[0] = lambda[0];
            let mut k = 1;
            for j in 0..p {
                if s.models.treatment[j] {
                    s.delta[(j, 0)] = lambda[k];
                    k += 1;
                }
            }
            if let Some((y, x)) = self.simulate_data(&mut s, true, rng) {
                s.q = y.clone();
                s.q_mat = x.clone();
                return (s, y, x);
            }
        }
    }

    fn rho_log_prior(&self, s: &ParameterState<f64>, x: &DMatrix<f64>) -> Option<f64> {
        let u = outcome_design(x, &self.z, &s.models.outcome);
        let qr = Qr::new(&u).ok()?;
        let scale = s.g_l * partition_sigma(&s.sigma).ok()?.sigma_y_given_x;
        let rr = qr.r() * s.rho();
        let d = qr.ncols() as f64;
        Some(qr.log_det_r() - 0.5 * d * scale.ln() - 0.5 * rr.norm_squared() / scale)
    }
}

fn set_rho(s: &mut ParameterState<f64>, rho: &DVector<f64>) {
    s.alpha = rho[0];
    s.tau[0] = rho[1];
    let mut k = 2;
    for j in 0..s.beta.len() {
        s.beta[j] = if s.models.outcome[j] {
            k += 1;
            rho[k - 1]
        } else {
            0.0
        };
    }
}

fn features(s: &ParameterState<f64>) -> [f64; 8] {
    let sg = &s.sigma;
    [
        s.alpha.atan(),
        s.tau[0].atan(),
        sg[(0, 0)].ln(),
        sg[(0, 1)] / (sg[(0, 0)] * sg[(1, 1)]).sqrt(),
        s.g_l.ln(),
        s.g_m.ln(),
        (s.nu - 2.0).ln(),
        (s.models.outcome_size() + s.models.treatment_size()) as f64,
    ]
}

fn batch_mean_se(v: &[f64], batches: usize) -> (f64, f64) {
    let len = v.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| v[b * len..(b + 1) * len].iter().sum::<f64>() / len as f64)
        .collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (m, (var / batches as f64).sqrt())
}

/// Single-treatment Gaussian model with an IW(ν, I) covariance prior and a
/// unit-rate exponential prior on ν − 2.
pub fn geweke_test(cfg: &GewekeConfig) -> Result<Vec<FeatureComparison>> {
    let iters = cfg.iterations;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let gspec = match cfg.g {
        GKind::Bric => GPriorSpec::bric(),
        GKind::HyperGOverN => GPriorSpec::hyper_g_n(),
    };
    let (m, _) = ModelPriorSpec::default().resolve(cfg.p, cfg.p)?;
    let h = Harness {
        cfg,
        z: std_normal_matrix(cfg.n, cfg.p, &mut rng),
        gspec: gspec.clone(),
        m,
    };

    let mut mc = vec![Vec::with_capacity(iters); FEATURES.len()];
    for _ in 0..iters {
        let (s, _, _) = h.forward(&mut rng);
        for (k, v) in features(&s).into_iter().enumerate() {
            mc[k].push(v);
        }
    }

    let (start, y, x) = h.forward(&mut rng);
    let d = Dataset::new(y, x, h.z.clone(), Family::Gaussian, vec![Family::Gaussian], vec![false; cfg.p])?;
    let scfg = SamplerConfig {
        iterations: iters + 1,
        burn_in: 0,
        covariance_update: cfg.update,
        g_outcome: gspec.clone(),
        g_treatment: gspec,
        seed: cfg.seed.wrapping_add(1),
        ..Default::default()
    };
    let mut gibbs = Gibbs::new(d, scfg, Some(start))?;
    let mut sc = vec![Vec::with_capacity(iters); FEATURES.len()];
    let mut refresh = ChaCha20Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    for _ in 0..iters {
        gibbs.step()?;
        let mut s = gibbs.state().clone();
        let x_old = gibbs.data().x().clone();
        if let Some((y, x)) = h.simulate_data(&mut s, false, &mut refresh) {
            if let (Some(new), Some(old)) = (h.rho_log_prior(&s, &x), h.rho_log_prior(&s, &x_old)) {
                if refresh.random::<f64>() < accept_prob(new - old) {
                    gibbs.replace_outcome_and_treatments(y, x)?;
                }
            }
        }
        for (k, v) in features(gibbs.state()).into_iter().enumerate() {
            sc[k].push(v);
        }
    }

    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    Ok(FEATURES
        .iter()
        .enumerate()
        .map(|(k, &feature)| {
            if constant(&mc[k]) && constant(&sc[k]) {
                return FeatureComparison {
                    feature,
                    forward_mean: mc[k][0],
                    gibbs_mean: sc[k][0],
                    se: 0.0,
                };
            }
            let m = mc[k].iter().sum::<f64>() / iters as f64;
            let var = mc[k].iter().map(|v| (v - m).powi(2)).sum::<f64>() / iters as f64;
            let (gibbs_mean, sse) = batch_mean_se(&sc[k], cfg.batches);
            FeatureComparison {
                feature,
                forward_mean: m,
                gibbs_mean,
                se: (var / iters as f64 + sse * sse).sqrt(),
            }
        })
        .collect())
}
