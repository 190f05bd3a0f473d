use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::adapt::{accept_prob, AdaptiveScale, BARKER_TARGET, RW_TARGET};
use crate::conditionals::{
    a_sigma, corrected_outcome, corrected_treatment, draw_sigma_cholesky, draw_sigma_iw, outcome_log_evidence,
    outcome_posterior_qr, partition_sigma, treatment_log_evidence, treatment_posterior_qr, two_component_g_diag,
    two_component_log_evidence, two_component_posterior_qr, CoefficientPriorTerms, SigmaPartition,
    TreatmentCorrection,
};
use crate::data::{outcome_design, treatment_design, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, Qr};
use crate::priors::{hyper_gn_logpdf, model_log_prior, nu_log_prior, sigma_log_prior, CovKind, NuPrior};
use crate::scalar::Real;
use crate::ullgm::{
    barker_step, boundary, latent_outcome_target, latent_treatment_target, set_observation_draw, update_dispersion,
};

use super::state::{initialize_state, Chain, Draw, MhDiagnostics, MoveCounter, ParameterState};
use super::{CovarianceUpdate, SamplerConfig};

/// Largest ν − (l + 1) the ν step will move to.
const NU_CAP: f64 = 500.0;

/// Flip one uniformly chosen permitted coordinate. `None` if nothing may flip.
pub fn propose_model_flip<R: Rng + ?Sized>(current: &[bool], permitted: &[bool], rng: &mut R) -> Option<Vec<bool>> {
    let idx: Vec<usize> = (0..current.len()).filter(|&j| permitted[j]).collect();
    if idx.is_empty() {
        return None;
    }
    let j = idx[rng.random_range(0..idx.len())];
    let mut v = current.to_vec();
    v[j] = !v[j];
    Some(v)
}

fn count(v: &[bool]) -> usize {
    v.iter().filter(|&&b| b).count()
}

struct Adaptation {
    g_l: AdaptiveScale,
    g_m: AdaptiveScale,
    nu: AdaptiveScale,
    latent_y: Vec<AdaptiveScale>,
    latent_x: Vec<Vec<AdaptiveScale>>,
    disp_y: Option<AdaptiveScale>,
    disp_x: Vec<Option<AdaptiveScale>>,
}

impl Adaptation {
    fn new<T: Real>(d: &Dataset<T>) -> Self {
        let latent = |gaussian: bool| {
            if gaussian {
                Vec::new()
            } else {
                vec![AdaptiveScale::new(0.5, BARKER_TARGET); d.n()]
            }
        };
        let disp = |has: bool| has.then(|| AdaptiveScale::new(0.3, RW_TARGET));
        Self {
            g_l: AdaptiveScale::new(1.0, RW_TARGET),
            g_m: AdaptiveScale::new(1.0, RW_TARGET),
            nu: AdaptiveScale::new(0.5, RW_TARGET),
            latent_y: latent(d.y_family().is_gaussian()),
            latent_x: d.x_families().iter().map(|f| latent(f.is_gaussian())).collect(),
            disp_y: disp(d.y_family().has_dispersion()),
            disp_x: d.x_families().iter().map(|f| disp(f.has_dispersion())).collect(),
        }
    }

    fn freeze(&mut self) {
        self.g_l.freeze();
        self.g_m.freeze();
        self.nu.freeze();
        self.latent_y.iter_mut().for_each(AdaptiveScale::freeze);
        self.latent_x.iter_mut().flatten().for_each(AdaptiveScale::freeze);
        self.disp_y.iter_mut().for_each(AdaptiveScale::freeze);
        self.disp_x.iter_mut().flatten().for_each(AdaptiveScale::freeze);
    }
}

/// Treatment-model evidence as a function of g, for a fixed model and X̃.
enum TreatmentEvidence<'a, T: Real> {
    Single {
        dim: usize,
        wtw: DMatrix<T>,
        b: &'a DMatrix<T>,
        part: &'a SigmaPartition<T>,
    },
    TwoComponent {
        qr: &'a Qr<T>,
        x: DVector<T>,
        incl: &'a [bool],
        mask: &'a [bool],
        c: T,
        b: T,
        sigma_xx: T,
    },
}

impl<T: Real> TreatmentEvidence<'_, T> {
    fn eval(&self, g: T) -> Result<T> {
        match self {
            Self::Single { dim, wtw, b, part } => Ok(treatment_log_evidence(*dim, wtw, b, &a_sigma(b, part, g)?, g)),
            Self::TwoComponent {
                qr,
                x,
                incl,
                mask,
                c,
                b,
                sigma_xx,
            } => two_component_log_evidence(x, qr, &two_component_g_diag(incl, mask, g, *c), *b, *sigma_xx),
        }
    }
}

fn treatment_evidence<'a, T: Real>(
    two_component: Option<f64>,
    mask: &'a [bool],
    qr: &'a Qr<T>,
    incl: &'a [bool],
    tc: &'a TreatmentCorrection<T>,
    part: &'a SigmaPartition<T>,
) -> TreatmentEvidence<'a, T> {
    match two_component {
        Some(c) => TreatmentEvidence::TwoComponent {
            qr,
            x: tc.x_tilde.column(0).into_owned(),
            incl,
            mask,
            c: T::lit(c),
            b: tc.b_sigma[(0, 0)],
            sigma_xx: part.sigma_xx[(0, 0)],
        },
        None => {
            let w = qr.qt_mat(&tc.x_tilde);
            TreatmentEvidence::Single {
                dim: qr.ncols(),
                wtw: w.transpose() * w,
                b: &tc.b_sigma,
                part,
            }
        }
    }
}

/// A running chain.
pub struct Gibbs<T: Real> {
    data: Dataset<T>,
    cfg: SamplerConfig,
    state: ParameterState<T>,
    u: DMatrix<T>,
    qr_u: Qr<T>,
    v: DMatrix<T>,
    qr_v: Qr<T>,
    y_obs: DVector<T>,
    x_obs: DMatrix<T>,
    m_l: T,
    m_m: T,
    permitted_l: Vec<bool>,
    permitted_m: Vec<bool>,
    adapt: Adaptation,
    model_l: MoveCounter,
    model_m: MoveCounter,
    rank_rejections: u64,
    rng: ChaCha20Rng,
    iteration: usize,
}

impl<T: Real> Gibbs<T> {
    pub fn new(data: Dataset<T>, cfg: SamplerConfig, init: Option<ParameterState<T>>) -> Result<Self> {
        cfg.validate(&data)?;
        let state = match init {
            Some(s) => {
                s.validate(&data)?;
                s
            }
            None => initialize_state(&data, &cfg),
        };
        let (m_l, m_m) = cfg.model_prior.resolve(data.outcome_eligible().len(), data.p())?;
        let u = outcome_design(data.x(), data.z(), &state.models.outcome);
        let v = treatment_design(data.z(), &state.models.treatment);
        let qr_u = Qr::new(&u)?;
        let qr_v = Qr::new(&v)?;
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        rng.set_stream(cfg.stream);
        Ok(Self {
            y_obs: data.y().clone(),
            x_obs: data.x().clone(),
            m_l: T::lit(m_l),
            m_m: T::lit(m_m),
            permitted_l: data.fixed_mask().iter().map(|m| !m).collect(),
            permitted_m: vec![true; data.p()],
            adapt: Adaptation::new(&data),
            model_l: MoveCounter::default(),
            model_m: MoveCounter::default(),
            rank_rejections: 0,
            rng,
            iteration: 0,
            data,
            cfg,
            state,
            u,
            qr_u,
            v,
            qr_v,
        })
    }

    pub fn state(&self) -> &ParameterState<T> {
        &self.state
    }

    pub fn data(&self) -> &Dataset<T> {
        &self.data
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    /// Swap in new outcome and treatment values (Gaussian data only). Used by
    /// joint-distribution tests that alternate parameter and data draws.
    pub fn replace_outcome_and_treatments(&mut self, y: DVector<T>, x: DMatrix<T>) -> Result<()> {
        if !self.data.all_gaussian() {
            return Err(Error::Unsupported("data replacement needs Gaussian columns".into()));
        }
        let data = self.data.with_outcome_and_treatments(y, x)?;
        let u = outcome_design(data.x(), data.z(), &self.state.models.outcome);
        self.qr_u = Qr::new(&u)?;
        self.u = u;
        self.state.q = data.y().clone();
        self.state.q_mat = data.x().clone();
        self.y_obs = data.y().clone();
        self.x_obs = data.x().clone();
        self.data = data;
        Ok(())
    }

    pub fn diagnostics(&self) -> MhDiagnostics {
        let (latent_y, latent_x) = MhDiagnostics::latent_summaries(&self.adapt.latent_y, &self.adapt.latent_x);
        MhDiagnostics {
            model_l: self.model_l,
            model_m: self.model_m,
            rank_rejections: self.rank_rejections,
            g_l: self.cfg.g_outcome.is_random().then(|| self.adapt.g_l.clone()),
            g_m: self.cfg.g_treatment.is_random().then(|| self.adapt.g_m.clone()),
            nu: matches!(self.cfg.cov_prior.nu_prior, NuPrior::ShiftedExponential).then(|| self.adapt.nu.clone()),
            latent_y,
            latent_x,
            dispersion_y: self.adapt.disp_y.clone(),
            dispersion_x: self.adapt.disp_x.clone(),
        }
    }

    fn eps(&self) -> DVector<T> {
        &self.state.q - &self.u * self.state.rho()
    }

    fn h(&self) -> DMatrix<T> {
        &self.state.q_mat - &self.v * self.state.lambda()
    }

    /// One full sweep.
    pub fn step(&mut self) -> Result<Draw<T>> {
        let it = self.iteration;
        if it == self.cfg.burn_in {
            self.adapt.freeze();
        }
        let draw = self.sweep().map_err(|e| e.at_iteration(it))?;
        self.iteration += 1;
        Ok(draw)
    }

    fn sweep(&mut self) -> Result<Draw<T>> {
        self.update_latents()?;
        let (tau_mean, tau_sd) = self.outcome_block()?;
        self.treatment_block()?;
        self.nu_step()?;
        self.sigma_step()?;
        Ok(Draw::from_state(&self.state, tau_mean, tau_sd))
    }

    fn update_latents(&mut self) -> Result<()> {
        let fam_y = self.data.y_family();
        if !fam_y.is_gaussian() {
            let part = partition_sigma(&self.state.sigma)?;
            let r = self.state.r_y.unwrap_or_else(T::one);
            if fam_y.has_dispersion() {
                for i in 0..self.data.n() {
                    if let Some(b) = boundary(self.data.y()[i]) {
                        self.y_obs[i] = set_observation_draw(b, self.state.q[i], r, &mut self.rng);
                    }
                }
            }
            let mean = &self.u * self.state.rho() + self.h() * &part.a_yx;
            for i in 0..self.data.n() {
                let target = latent_outcome_target(fam_y, self.y_obs[i], r, mean[i], part.sigma_y_given_x);
                let q = self.state.q[i];
                let (nq, _, _) = barker_step(q, target(q), &target, &mut self.adapt.latent_y[i], &mut self.rng);
                self.state.q[i] = nq;
            }
            if let Some(adapt) = self.adapt.disp_y.as_mut() {
                let r = update_dispersion(fam_y, self.y_obs.as_slice(), self.state.q.as_slice(), r, adapt, &mut self.rng)?;
                self.state.r_y = Some(r);
            }
        }
        for j in 0..self.data.l() {
            let fam = self.data.x_families()[j];
            if fam.is_gaussian() {
                continue;
            }
            let part = partition_sigma(&self.state.sigma)?;
            let prec_row = part.sigma_xx_factor().inverse().row(j).transpose();
            let r = self.state.r_x[j].unwrap_or_else(T::one);
            if fam.has_dispersion() {
                for i in 0..self.data.n() {
                    if let Some(b) = boundary(self.data.x()[(i, j)]) {
                        self.x_obs[(i, j)] = set_observation_draw(b, self.state.q_mat[(i, j)], r, &mut self.rng);
                    }
                }
            }
            let eps = self.eps();
            let mut h = self.h();
            for i in 0..self.data.n() {
                let h_i = h.row(i).transpose();
                let q0 = self.state.q_mat[(i, j)];
                let target = latent_treatment_target(
                    fam,
                    self.x_obs[(i, j)],
                    r,
                    j,
                    q0,
                    eps[i],
                    &h_i,
                    &part.a_yx,
                    part.sigma_y_given_x,
                    &prec_row,
                );
                let (nq, _, accepted) = barker_step(q0, target(q0), &target, &mut self.adapt.latent_x[j][i], &mut self.rng);
                if accepted {
                    h[(i, j)] += nq - q0;
                    self.state.q_mat[(i, j)] = nq;
                }
            }
            if let Some(adapt) = self.adapt.disp_x[j].as_mut() {
                let obs: Vec<T> = self.x_obs.column(j).iter().copied().collect();
                let lat: Vec<T> = self.state.q_mat.column(j).iter().copied().collect();
                self.state.r_x[j] = Some(update_dispersion(fam, &obs, &lat, r, adapt, &mut self.rng)?);
            }
        }
        Ok(())
    }

    /// Random-walk step on log g with Jacobian; `log_target` includes the prior.
    fn g_step(g: T, log_target: impl Fn(T) -> Result<T>, adapt: &mut AdaptiveScale, rng: &mut ChaCha20Rng) -> Result<T> {
        let lg = g.ln();
        let prop_lg = lg + T::std_normal(rng) * T::lit(adapt.scale());
        let prop = prop_lg.exp();
        if !(prop > T::zero() && prop.is_finite()) {
            adapt.record(0.0, false);
            return Ok(g);
        }
        let log_ratio = log_target(prop)? - log_target(g)? + prop_lg - lg;
        let alpha = accept_prob(log_ratio.f64());
        let accepted = T::open01(rng).f64() < alpha;
        adapt.record(alpha, accepted);
        Ok(if accepted { prop } else { g })
    }

    fn outcome_block(&mut self) -> Result<(DVector<T>, DVector<T>)> {
        let part = partition_sigma(&self.state.sigma)?;
        let sigma = part.sigma_y_given_x;
        let y_tilde = corrected_outcome(&self.state.q, &self.h(), &part);
        let prior_only = self.cfg.prior_only;
        let n_elig = self.data.outcome_eligible().len();

        if let Some(prop) = propose_model_flip(&self.state.models.outcome, &self.permitted_l, &mut self.rng) {
            let u = outcome_design(self.data.x(), self.data.z(), &prop);
            match Qr::new(&u) {
                Err(Error::RankDeficient(_)) => {
                    self.rank_rejections += 1;
                    self.model_l.record(false);
                }
                Err(e) => return Err(e),
                Ok(qr) => {
                    let g = self.state.g_l;
                    let mut log_ratio = model_log_prior(count(&prop), n_elig, self.m_l)
                        - model_log_prior(count(&self.state.models.outcome), n_elig, self.m_l);
                    if !prior_only {
                        log_ratio += outcome_log_evidence(qr.ncols(), qr.proj_norm2(&y_tilde), g, sigma)
                            - outcome_log_evidence(self.qr_u.ncols(), self.qr_u.proj_norm2(&y_tilde), g, sigma);
                    }
                    let accepted = T::open01(&mut self.rng).f64() < accept_prob(log_ratio.f64());
                    self.model_l.record(accepted);
                    if accepted {
                        self.state.models.outcome = prop;
                        self.u = u;
                        self.qr_u = qr;
                    }
                }
            }
        }

        if self.cfg.g_outcome.is_random() {
            let (dim, proj2) = (self.qr_u.ncols(), self.qr_u.proj_norm2(&y_tilde));
            let (n, a) = (self.data.n(), T::lit(self.cfg.g_outcome.a));
            let target = |g: T| -> Result<T> {
                let ev = if prior_only { T::zero() } else { outcome_log_evidence(dim, proj2, g, sigma) };
                Ok(ev + hyper_gn_logpdf(g, n, a)?)
            };
            self.state.g_l = Self::g_step(self.state.g_l, target, &mut self.adapt.g_l, &mut self.rng)?;
        }

        let post = outcome_posterior_qr(&y_tilde, &self.qr_u, self.state.g_l, sigma);
        let rho = post.sample(&mut self.rng);
        self.state.set_rho(&rho);
        let l = self.data.l();
        let tau_mean = post.mean.rows(1, l).into_owned();
        let tau_sd = DVector::from_fn(l, |j, _| post.marginal_var(1 + j).sqrt());
        Ok((tau_mean, tau_sd))
    }

    fn treatment_block(&mut self) -> Result<()> {
        let part = partition_sigma(&self.state.sigma)?;
        let eps = self.eps();
        let tc = corrected_treatment(&self.state.q_mat, &eps, &part, self.state.g_m)?;
        let prior_only = self.cfg.prior_only;
        let p = self.data.p();

        if let Some(prop) = propose_model_flip(&self.state.models.treatment, &self.permitted_m, &mut self.rng) {
            let v = treatment_design(self.data.z(), &prop);
            match Qr::new(&v) {
                Err(Error::RankDeficient(_)) => {
                    self.rank_rejections += 1;
                    self.model_m.record(false);
                }
                Err(e) => return Err(e),
                Ok(qr) => {
                    let g = self.state.g_m;
                    let mut log_ratio = model_log_prior(count(&prop), p, self.m_m)
                        - model_log_prior(count(&self.state.models.treatment), p, self.m_m);
                    if !prior_only {
                        let (two, mask) = (self.cfg.g_treatment.two_component, self.data.fixed_mask());
                        let cur = &self.state.models.treatment;
                        log_ratio += treatment_evidence(two, mask, &qr, &prop, &tc, &part).eval(g)?
                            - treatment_evidence(two, mask, &self.qr_v, cur, &tc, &part).eval(g)?;
                    }
                    let accepted = T::open01(&mut self.rng).f64() < accept_prob(log_ratio.f64());
                    self.model_m.record(accepted);
                    if accepted {
                        self.state.models.treatment = prop;
                        self.v = v;
                        self.qr_v = qr;
                    }
                }
            }
        }

        if self.cfg.g_treatment.is_random() {
            let (n, a) = (self.data.n(), T::lit(self.cfg.g_treatment.a));
            let incl = &self.state.models.treatment;
            let ev = treatment_evidence(
                self.cfg.g_treatment.two_component,
                self.data.fixed_mask(),
                &self.qr_v,
                incl,
                &tc,
                &part,
            );
            let target = |g: T| -> Result<T> {
                let e = if prior_only { T::zero() } else { ev.eval(g)? };
                Ok(e + hyper_gn_logpdf(g, n, a)?)
            };
            let new_g = Self::g_step(self.state.g_m, target, &mut self.adapt.g_m, &mut self.rng)?;
            self.state.g_m = new_g;
        }

        // X̃ does not depend on g; B does not either, so only A changes with the new g.
        let g = self.state.g_m;
        let lambda = match self.cfg.g_treatment.two_component {
            Some(c) => {
                let gd = two_component_g_diag(&self.state.models.treatment, self.data.fixed_mask(), g, T::lit(c));
                let post = two_component_posterior_qr(
                    &tc.x_tilde.column(0).into_owned(),
                    &self.qr_v,
                    &gd,
                    tc.b_sigma[(0, 0)],
                    part.sigma_xx[(0, 0)],
                )?;
                let s = post.sample(&mut self.rng);
                DMatrix::from_column_slice(s.len(), 1, s.as_slice())
            }
            None => treatment_posterior_qr(&tc.x_tilde, &self.qr_v, &tc.b_sigma, &part, g)?.sample(&mut self.rng)?,
        };
        self.state.set_lambda(&lambda);
        Ok(())
    }

    fn nu_step(&mut self) -> Result<()> {
        if let NuPrior::ShiftedExponential = self.cfg.cov_prior.nu_prior {
            self.state.nu = mh_update_nu(
                self.state.nu,
                &self.state.sigma,
                &self.cfg.cov_prior,
                &mut self.adapt.nu,
                &mut self.rng,
            )?;
        }
        Ok(())
    }

    fn coefficient_prior_terms(&self) -> CoefficientPriorTerms<T> {
        let u_rho = &self.u * self.state.rho();
        let lambda = self.state.lambda();
        let scaled = match self.cfg.g_treatment.two_component {
            Some(c) => {
                let gd = two_component_g_diag(&self.state.models.treatment, self.data.fixed_mask(), self.state.g_m, T::lit(c));
                let mut s = lambda;
                for (k, gk) in gd.iter().enumerate() {
                    s.row_mut(k).scale_mut(T::one() / *gk);
                }
                &self.v * s
            }
            None => &self.v * lambda / self.state.g_m.sqrt(),
        };
        CoefficientPriorTerms {
            outcome_dim: self.u.ncols(),
            outcome_quad: u_rho.norm_squared() / self.state.g_l,
            treatment_dim: self.v.ncols(),
            treatment_gram: scaled.transpose() * scaled,
        }
    }

    fn sigma_step(&mut self) -> Result<()> {
        let eps = self.eps();
        let h = self.h();
        let terms = match self.cfg.covariance_update {
            CovarianceUpdate::Exact => Some(self.coefficient_prior_terms()),
            CovarianceUpdate::Verbatim => None,
        };
        let nu = self.state.nu;
        let sigma = match self.cfg.cov_prior.kind {
            CovKind::InverseWishart => draw_sigma_iw(&eps, &h, nu, terms.as_ref(), &mut self.rng)?,
            CovKind::Cholesky => {
                let cur = partition_sigma(&self.state.sigma)?.sigma_y_given_x;
                draw_sigma_cholesky(&eps, &h, nu, &self.cfg.cov_prior, cur, terms.as_ref(), &mut self.rng)?
            }
        };
        self.state.sigma = symmetrize(&sigma);
        Ok(())
    }
}

/// Random-walk MH on log(ν − l − 1) for the shifted-Exponential ν prior. The
/// target is the Σ prior given ν times the ν prior.
pub fn mh_update_nu<T: Real, R: Rng + ?Sized>(
    nu: T,
    sigma: &DMatrix<T>,
    spec: &crate::priors::CovPriorSpec,
    adapt: &mut AdaptiveScale,
    rng: &mut R,
) -> Result<T> {
    let l = sigma.nrows() - 1;
    let shift = T::usize(l + 1);
    let x = (nu - shift).ln();
    let prop_x = x + T::std_normal(rng) * T::lit(adapt.scale());
    let prop = shift + prop_x.exp();
    if !(prop_x.exp() > T::zero()) || prop_x.exp() > T::lit(NU_CAP) {
        adapt.record(0.0, false);
        return Ok(nu);
    }
    let target = |v: T| -> Result<T> { Ok(sigma_log_prior(sigma, spec, v)? + nu_log_prior(v, l)) };
    let log_ratio = target(prop)? - target(nu)? + prop_x - x;
    let alpha = accept_prob(log_ratio.f64());
    let accepted = T::open01(rng).f64() < alpha;
    adapt.record(alpha, accepted);
    Ok(if accepted { prop } else { nu })
}

fn collect<T: Real>(mut gibbs: Gibbs<T>) -> Result<Chain<T>> {
    let iterations = gibbs.cfg.iterations;
    let mut draws = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        draws.push(gibbs.step()?);
    }
    Ok(Chain {
        draws,
        burn_in: gibbs.cfg.burn_in,
        seed: gibbs.cfg.seed,
        stream: gibbs.cfg.stream,
        diagnostics: gibbs.diagnostics(),
        l: gibbs.data.l(),
        p: gibbs.data.p(),
        y_family: gibbs.data.y_family(),
        x_families: gibbs.data.x_families().to_vec(),
    })
}

/// Run `cfg.iterations` sweeps from the default initial state.
pub fn run_gibbs<T: Real>(d: &Dataset<T>, cfg: &SamplerConfig) -> Result<Chain<T>> {
    collect(Gibbs::new(d.clone(), cfg.clone(), None)?)
}

/// Run from an explicit initial state.
pub fn run_gibbs_from<T: Real>(d: &Dataset<T>, cfg: &SamplerConfig, init: ParameterState<T>) -> Result<Chain<T>> {
    collect(Gibbs::new(d.clone(), cfg.clone(), Some(init))?)
}
