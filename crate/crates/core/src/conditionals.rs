//! Conditional posteriors and conditional Bayes factors for the coefficient and
//! covariance blocks.
//!
//! Quadratic forms in projection matrices are evaluated as ‖Q₁ᵀv‖² from a thin QR
//! of the design; n×n projectors are never formed.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::data::{outcome_design, treatment_design, Dataset};
use crate::dist::{sample_ig, sample_iw, std_normal_matrix, std_normal_vector};
use crate::error::{Error, Result};
use crate::linalg::{ln_det_general, lu_solve, symmetrize, Qr, Spd};
use crate::priors::CovPriorSpec;
use crate::scalar::Real;

/// Σ split into its outcome, cross and treatment blocks.
#[derive(Clone)]
pub struct SigmaPartition<T: Real> {
    pub sigma_yy: T,
    /// Σ_yx stored as a column (length l).
    pub sigma_yx: DVector<T>,
    pub sigma_xx: DMatrix<T>,
    pub sigma_y_given_x: T,
    /// a_yx = Σ_yx Σ_xx⁻¹, stored as a column; equals w = Σ_xx⁻¹Σ_yxᵀ.
    pub a_yx: DVector<T>,
    xx: Spd<T>,
}

impl<T: Real> SigmaPartition<T> {
    pub fn l(&self) -> usize {
        self.sigma_yx.len()
    }

    pub fn sigma_xx_factor(&self) -> &Spd<T> {
        &self.xx
    }

    /// Rebuild Σ from (σ_{y|x}, a_yx, Σ_xx).
    pub fn reassemble(&self) -> DMatrix<T> {
        reassemble_sigma(self.sigma_y_given_x, &self.a_yx, &self.sigma_xx)
    }

    pub fn is_exogenous(&self) -> bool {
        self.sigma_yx.iter().all(|v| *v == T::zero())
    }
}

pub fn partition_sigma<T: Real>(sigma: &DMatrix<T>) -> Result<SigmaPartition<T>> {
    let k = sigma.nrows();
    if k < 2 || !sigma.is_square() {
        return Err(Error::DimensionMismatch(format!("Σ must be square of size ≥ 2, got {k}")));
    }
    Spd::new(sigma)?;
    let l = k - 1;
    let sigma_xx = symmetrize(&sigma.view((1, 1), (l, l)).into_owned());
    let xx = Spd::new(&sigma_xx)?;
    let sigma_yx = DVector::from_fn(l, |j, _| (sigma[(0, j + 1)] + sigma[(j + 1, 0)]) * T::half());
    let a_yx = xx.solve(&sigma_yx);
    let sigma_yy = sigma[(0, 0)];
    let sigma_y_given_x = sigma_yy - sigma_yx.dot(&a_yx);
    if !(sigma_y_given_x > T::zero()) {
        return Err(Error::numerical("Σ has a nonpositive conditional variance"));
    }
    Ok(SigmaPartition {
        sigma_yy,
        sigma_yx,
        sigma_xx,
        sigma_y_given_x,
        a_yx,
        xx,
    })
}

/// Σ = [[σ + aᵀΣ_xx a, aᵀΣ_xx], [Σ_xx a, Σ_xx]].
pub fn reassemble_sigma<T: Real>(sigma_y_given_x: T, a_yx: &DVector<T>, sigma_xx: &DMatrix<T>) -> DMatrix<T> {
    let l = a_yx.len();
    let syx = sigma_xx * a_yx;
    let mut s = DMatrix::zeros(l + 1, l + 1);
    s[(0, 0)] = sigma_y_given_x + a_yx.dot(&syx);
    for j in 0..l {
        s[(0, j + 1)] = syx[j];
        s[(j + 1, 0)] = syx[j];
    }
    s.view_mut((1, 1), (l, l)).copy_from(&symmetrize(sigma_xx));
    s
}

/// H = Q − VΛ.
pub fn treatment_residual<T: Real>(q: &DMatrix<T>, v: &DMatrix<T>, lambda: &DMatrix<T>) -> DMatrix<T> {
    q - v * lambda
}

/// ỹ = q − H a_yxᵀ.
pub fn corrected_outcome<T: Real>(q: &DVector<T>, h: &DMatrix<T>, part: &SigmaPartition<T>) -> DVector<T> {
    q - h * &part.a_yx
}

/// Gaussian N(mean, (FᵀF)⁻¹) with an upper-triangular precision factor F.
#[derive(Clone, Debug)]
pub struct GaussianPosterior<T: Real> {
    pub mean: DVector<T>,
    pub precision_factor: DMatrix<T>,
}

impl<T: Real> GaussianPosterior<T> {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<T> {
        let z = std_normal_vector(self.dim(), rng);
        let dz = self
            .precision_factor
            .solve_upper_triangular(&z)
            .expect("precision factor has a positive diagonal");
        &self.mean + dz
    }

    /// Explicit covariance, for diagnostics and tests.
    pub fn covariance(&self) -> DMatrix<T> {
        let d = self.dim();
        let finv = self
            .precision_factor
            .solve_upper_triangular(&DMatrix::identity(d, d))
            .expect("precision factor has a positive diagonal");
        &finv * finv.transpose()
    }

    /// Variance of coordinate j.
    pub fn marginal_var(&self, j: usize) -> T {
        let mut e = DVector::zeros(self.dim());
        e[j] = T::one();
        self.precision_factor
            .tr_solve_upper_triangular(&e)
            .expect("precision factor has a positive diagonal")
            .norm_squared()
    }
}

/// MN(mean, (RᵀR)⁻¹, col_cov) with an upper-triangular row precision factor R.
#[derive(Clone, Debug)]
pub struct MatrixNormalPosterior<T: Real> {
    pub mean: DMatrix<T>,
    pub row_precision_factor: DMatrix<T>,
    pub col_cov: DMatrix<T>,
}

impl<T: Real> MatrixNormalPosterior<T> {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DMatrix<T>> {
        let (d, l) = self.mean.shape();
        let lc = Spd::new(&self.col_cov)?.l();
        let z = std_normal_matrix(d, l, rng);
        let rz = self
            .row_precision_factor
            .solve_upper_triangular(&z)
            .expect("row factor has a positive diagonal");
        Ok(&self.mean + rz * lc.transpose())
    }

    pub fn row_cov(&self) -> DMatrix<T> {
        let d = self.mean.nrows();
        let rinv = self
            .row_precision_factor
            .solve_upper_triangular(&DMatrix::identity(d, d))
            .expect("row factor has a positive diagonal");
        &rinv * rinv.transpose()
    }
}

fn shrink<T: Real>(g: T) -> T {
    g / (g + T::one())
}

/// ρ | rest ~ N((g/(g+1))(UᵀU)⁻¹Uᵀỹ, σ_{y|x}(g/(g+1))(UᵀU)⁻¹), from a QR of U.
pub fn outcome_posterior_qr<T: Real>(y_tilde: &DVector<T>, qr: &Qr<T>, g: T, sigma_y_given_x: T) -> GaussianPosterior<T> {
    let s = shrink(g);
    let mean = qr.least_squares(y_tilde) * s;
    let precision_factor = qr.r() / (sigma_y_given_x * s).sqrt();
    GaussianPosterior { mean, precision_factor }
}

pub fn outcome_posterior<T: Real>(
    y_tilde: &DVector<T>,
    u: &DMatrix<T>,
    g: T,
    sigma_y_given_x: T,
) -> Result<GaussianPosterior<T>> {
    Ok(outcome_posterior_qr(y_tilde, &Qr::new(u)?, g, sigma_y_given_x))
}

/// Log conditional evidence of an outcome model up to a model-free constant:
/// −(d/2) log(g+1) + g/(2σ(g+1)) ‖Q₁ᵀỹ‖².
pub fn outcome_log_evidence<T: Real>(dim: usize, proj_norm2: T, g: T, sigma_y_given_x: T) -> T {
    -T::half() * T::usize(dim) * g.ln_1p() + T::half() * shrink(g) * proj_norm2 / sigma_y_given_x
}

/// log CBF(L_i, L_j) for the outcome equation.
pub fn log_cbf_outcome<T: Real>(
    l_i: &[bool],
    l_j: &[bool],
    y_tilde: &DVector<T>,
    g: T,
    sigma_y_given_x: T,
    d: &Dataset<T>,
) -> Result<T> {
    let ev = |incl: &[bool]| -> Result<T> {
        let qr = Qr::new(&outcome_design(d.x(), d.z(), incl))?;
        Ok(outcome_log_evidence(qr.ncols(), qr.proj_norm2(y_tilde), g, sigma_y_given_x))
    };
    Ok(ev(l_i)? - ev(l_j)?)
}

/// Quantities shared by the treatment posterior and CBF.
#[derive(Clone, Debug)]
pub struct TreatmentCorrection<T: Real> {
    pub x_tilde: DMatrix<T>,
    pub b_sigma: DMatrix<T>,
    pub a_sigma: DMatrix<T>,
}

/// B_Σ = I + σ⁻¹Σ_yxᵀ a_yx.
pub fn b_sigma<T: Real>(part: &SigmaPartition<T>) -> DMatrix<T> {
    let l = part.l();
    DMatrix::identity(l, l) + &part.sigma_yx * part.a_yx.transpose() / part.sigma_y_given_x
}

/// A_Σ = ((I + g⁻¹B⁻¹)⁻¹)ᵀ Σ_xx⁻¹ B.
pub fn a_sigma<T: Real>(b: &DMatrix<T>, part: &SigmaPartition<T>, g: T) -> Result<DMatrix<T>> {
    let l = part.l();
    // (I + g⁻¹B⁻¹)⁻¹ = (B + g⁻¹I)⁻¹ B
    let k = lu_solve(&(b + DMatrix::identity(l, l) / g), b)?;
    Ok(k.transpose() * part.sigma_xx_factor().solve_mat(b))
}

/// X̃ = Q − σ⁻¹ ε Σ_yx (B⁻¹)ᵀ together with B_Σ and A_Σ.
pub fn corrected_treatment<T: Real>(
    q: &DMatrix<T>,
    eps: &DVector<T>,
    part: &SigmaPartition<T>,
    g: T,
) -> Result<TreatmentCorrection<T>> {
    let b = b_sigma(part);
    let binv_syx = lu_solve(&b, &DMatrix::from_column_slice(part.l(), 1, part.sigma_yx.as_slice()))?;
    let x_tilde = q - eps * binv_syx.transpose() / part.sigma_y_given_x;
    let a = a_sigma(&b, part, g)?;
    Ok(TreatmentCorrection {
        x_tilde,
        b_sigma: b,
        a_sigma: a,
    })
}

/// Log conditional evidence of a treatment model up to a model-free constant:
/// −(d/2) log|gB + I| + ½ tr(A WᵀW) with W = Q₁ᵀX̃.
pub fn treatment_log_evidence<T: Real>(dim: usize, wtw: &DMatrix<T>, b: &DMatrix<T>, a: &DMatrix<T>, g: T) -> T {
    let l = b.nrows();
    let gb = b * g + DMatrix::identity(l, l);
    -T::half() * T::usize(dim) * ln_det_general(&gb) + T::half() * (a * wtw).trace()
}

/// log CBF(M_i, M_j) for the treatment equation.
pub fn log_cbf_treatment<T: Real>(
    m_i: &[bool],
    m_j: &[bool],
    x_tilde: &DMatrix<T>,
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    g: T,
    d: &Dataset<T>,
) -> Result<T> {
    let ev = |incl: &[bool]| -> Result<T> {
        let qr = Qr::new(&treatment_design(d.z(), incl))?;
        let w = qr.qt_mat(x_tilde);
        Ok(treatment_log_evidence(qr.ncols(), &(w.transpose() * &w), b, a, g))
    };
    Ok(ev(m_i)? - ev(m_j)?)
}

/// Column covariance (B + g⁻¹I)⁻¹Σ_xx, computed as the inverse of the symmetric
/// precision (1 + 1/g)Σ_xx⁻¹ + wwᵀ/σ_{y|x}.
pub fn treatment_col_cov<T: Real>(part: &SigmaPartition<T>, g: T) -> Result<DMatrix<T>> {
    let sxx_inv = part.sigma_xx_factor().inverse();
    let prec = sxx_inv * (T::one() + T::one() / g) + &part.a_yx * part.a_yx.transpose() / part.sigma_y_given_x;
    Ok(Spd::new(&prec)?.inverse())
}

/// Λ | rest ~ MN((VᵀV)⁻¹VᵀX̃((I + g⁻¹B⁻¹)⁻¹)ᵀ, (VᵀV)⁻¹, (B + g⁻¹I)⁻¹Σ_xx).
pub fn treatment_posterior_qr<T: Real>(
    x_tilde: &DMatrix<T>,
    qr: &Qr<T>,
    b: &DMatrix<T>,
    part: &SigmaPartition<T>,
    g: T,
) -> Result<MatrixNormalPosterior<T>> {
    let l = b.nrows();
    let k = lu_solve(&(b + DMatrix::identity(l, l) / g), b)?;
    let w = qr.qt_mat(x_tilde);
    let mean = qr.solve_r_mat(&w) * k.transpose();
    Ok(MatrixNormalPosterior {
        mean,
        row_precision_factor: qr.r().clone(),
        col_cov: treatment_col_cov(part, g)?,
    })
}

pub fn treatment_posterior<T: Real>(
    x_tilde: &DMatrix<T>,
    v: &DMatrix<T>,
    part: &SigmaPartition<T>,
    g: T,
) -> Result<MatrixNormalPosterior<T>> {
    let b = b_sigma(part);
    treatment_posterior_qr(x_tilde, &Qr::new(v)?, &b, part, g)
}

/// Parameters of IW(ν + n, I + [ε : H]ᵀ[ε : H]).
pub fn covariance_posterior_iw<T: Real>(eps: &DVector<T>, h: &DMatrix<T>, nu: T) -> (T, DMatrix<T>) {
    let e = stack_residuals(eps, h);
    let k = e.ncols();
    (nu + T::usize(eps.len()), DMatrix::identity(k, k) + e.transpose() * &e)
}

fn stack_residuals<T: Real>(eps: &DVector<T>, h: &DMatrix<T>) -> DMatrix<T> {
    let n = eps.len();
    let l = h.ncols();
    let mut e = DMatrix::zeros(n, l + 1);
    e.column_mut(0).copy_from(eps);
    e.columns_mut(1, l).copy_from(h);
    e
}

/// Contributions of the g-priors on ρ and Λ to the covariance conditional. Both
/// priors scale with Σ, so they shift the inverse-gamma and inverse-Wishart
/// parameters of σ_{y|x} and Σ_xx.
#[derive(Clone, Debug)]
pub struct CoefficientPriorTerms<T: Real> {
    /// Number of nonzero outcome coefficients, d_U.
    pub outcome_dim: usize,
    /// ρᵀ(prior precision without σ)ρ, e.g. ‖Uρ‖²/g_L.
    pub outcome_quad: T,
    /// Number of rows of Λ_M, d_V.
    pub treatment_dim: usize,
    /// Λᵀ(prior row precision)Λ, e.g. (VΛ)ᵀ(VΛ)/g_M.
    pub treatment_gram: DMatrix<T>,
}

/// Draw Σ given residuals under the inverse Wishart prior.
///
/// With `terms = None` this is the plain IW(ν + n, I + [ε : H]ᵀ[ε : H]) draw. With
/// the coefficient-prior terms the draw is from the exact full conditional, built
/// from the block decomposition of that inverse Wishart:
/// σ_{y|x} ~ IG, a_yx | σ_{y|x} ~ N, Σ_xx ~ IW, with the g-prior contributions
/// added to the σ_{y|x} and Σ_xx factors.
pub fn draw_sigma_iw<T: Real, R: Rng + ?Sized>(
    eps: &DVector<T>,
    h: &DMatrix<T>,
    nu: T,
    terms: Option<&CoefficientPriorTerms<T>>,
    rng: &mut R,
) -> Result<DMatrix<T>> {
    let (df, scale) = covariance_posterior_iw(eps, h, nu);
    let Some(terms) = terms else {
        return sample_iw(df, &scale, rng);
    };
    let l = h.ncols();
    let s_xx = scale.view((1, 1), (l, l)).into_owned();
    let s_xy = scale.view((1, 0), (l, 1)).column(0).into_owned();
    let sxx = Spd::new(&s_xx)?;
    let a_mean = sxx.solve(&s_xy);
    let s_y_given_x = scale[(0, 0)] - s_xy.dot(&a_mean);
    let shape = (df + T::usize(terms.outcome_dim)) * T::half();
    let rate = (s_y_given_x + terms.outcome_quad) * T::half();
    let sigma = sample_ig(shape, rate, rng);
    // a | σ ~ N(S_xx⁻¹S_xy, σ S_xx⁻¹): draw via L⁻ᵀz.
    let z = std_normal_vector(l, rng);
    let a = a_mean + sxx.solve_lt(&z) * sigma.sqrt();
    let sigma_xx = sample_iw(
        df - T::one() + T::usize(terms.treatment_dim),
        &(s_xx + &terms.treatment_gram),
        rng,
    )?;
    Ok(reassemble_sigma(sigma, &a, &sigma_xx))
}

/// a_yx | σ_{y|x} ~ N((HᵀH + (σ/ω)I)⁻¹Hᵀε, σ(HᵀH + (σ/ω)I)⁻¹).
pub fn cholesky_a_posterior<T: Real>(
    eps: &DVector<T>,
    h: &DMatrix<T>,
    sigma_y_given_x: T,
    omega_a: T,
) -> Result<GaussianPosterior<T>> {
    let l = h.ncols();
    let prec = h.transpose() * h + DMatrix::identity(l, l) * (sigma_y_given_x / omega_a);
    let chol = Spd::new(&prec)?;
    let mean = chol.solve(&(h.transpose() * eps));
    let precision_factor = chol.l().transpose() / sigma_y_given_x.sqrt();
    Ok(GaussianPosterior { mean, precision_factor })
}

/// IG parameters of σ_{y|x} | a_yx.
pub fn cholesky_sigma_posterior<T: Real>(
    eps: &DVector<T>,
    h: &DMatrix<T>,
    a: &DVector<T>,
    nu: T,
    spec: &CovPriorSpec,
    terms: Option<&CoefficientPriorTerms<T>>,
) -> (T, T) {
    let r = eps - h * a;
    let n = T::usize(eps.len());
    let mut shape = T::lit(spec.c_shape(nu.f64())) + n * T::half();
    let mut rate = T::lit(spec.d_scale()) + r.norm_squared() * T::half();
    if let Some(t) = terms {
        shape += T::usize(t.outcome_dim) * T::half();
        rate += t.outcome_quad * T::half();
    }
    (shape, rate)
}

/// IW parameters of Σ_xx.
pub fn cholesky_sigma_xx_posterior<T: Real>(
    h: &DMatrix<T>,
    nu: T,
    spec: &CovPriorSpec,
    terms: Option<&CoefficientPriorTerms<T>>,
) -> (T, DMatrix<T>) {
    let l = h.ncols();
    let mut df = T::lit(spec.xi(nu.f64())) + T::usize(h.nrows());
    let mut scale = DMatrix::identity(l, l) + h.transpose() * h;
    if let Some(t) = terms {
        df += T::usize(t.treatment_dim);
        scale += &t.treatment_gram;
    }
    (df, scale)
}

/// One sweep over the Cholesky components: a_yx | σ, then σ | a_yx, then Σ_xx.
pub fn draw_sigma_cholesky<T: Real, R: Rng + ?Sized>(
    eps: &DVector<T>,
    h: &DMatrix<T>,
    nu: T,
    spec: &CovPriorSpec,
    current_sigma_y_given_x: T,
    terms: Option<&CoefficientPriorTerms<T>>,
    rng: &mut R,
) -> Result<DMatrix<T>> {
    let a = cholesky_a_posterior(eps, h, current_sigma_y_given_x, T::lit(spec.omega_a))?.sample(rng);
    let (shape, rate) = cholesky_sigma_posterior(eps, h, &a, nu, spec, terms);
    let sigma = sample_ig(shape, rate, rng);
    let (df, scale) = cholesky_sigma_xx_posterior(h, nu, spec, terms);
    let sigma_xx = sample_iw(df, &scale, rng)?;
    Ok(reassemble_sigma(sigma, &a, &sigma_xx))
}

/// Diagonal of G for the two-component prior: √g_C for the intercept and the
/// covariates, √(c·g_C) for the fixed instruments among the included columns.
pub fn two_component_g_diag<T: Real>(incl: &[bool], instrument_mask: &[bool], g_c: T, c: T) -> DVector<T> {
    let mut diag = vec![g_c.sqrt()];
    for j in 0..incl.len() {
        if incl[j] {
            diag.push(if instrument_mask[j] { (c * g_c).sqrt() } else { g_c.sqrt() });
        }
    }
    DVector::from_vec(diag)
}

struct TwoComponent<T: Real> {
    prec: Spd<T>,
    vtx: DVector<T>,
}

fn two_component_parts<T: Real>(x_tilde: &DVector<T>, qr: &Qr<T>, g_diag: &DVector<T>, b_sigma: T) -> Result<TwoComponent<T>> {
    let r = qr.r();
    let gram = r.transpose() * r;
    let ginv = g_diag.map(|v| T::one() / v);
    let scaled = DMatrix::from_fn(gram.nrows(), gram.ncols(), |i, j| gram[(i, j)] * ginv[i] * ginv[j]);
    let prec = Spd::new(&(&gram * b_sigma + scaled))?;
    let vtx = r.transpose() * qr.qt_vec(x_tilde);
    Ok(TwoComponent { prec, vtx })
}

/// λ | rest ~ N(b A_G Vᵀx̃, σ_xx A_G) with A_G⁻¹ = bVᵀV + G⁻¹VᵀVG⁻¹ (l = 1 only).
pub fn two_component_posterior_qr<T: Real>(
    x_tilde: &DVector<T>,
    qr: &Qr<T>,
    g_diag: &DVector<T>,
    b_sigma: T,
    sigma_xx: T,
) -> Result<GaussianPosterior<T>> {
    let tc = two_component_parts(x_tilde, qr, g_diag, b_sigma)?;
    let mean = tc.prec.solve(&tc.vtx) * b_sigma;
    let precision_factor = tc.prec.l().transpose() / sigma_xx.sqrt();
    Ok(GaussianPosterior { mean, precision_factor })
}

pub fn two_component_posterior<T: Real>(
    x_tilde: &DVector<T>,
    v: &DMatrix<T>,
    g_diag: &DVector<T>,
    b_sigma: T,
    sigma_xx: T,
) -> Result<GaussianPosterior<T>> {
    two_component_posterior_qr(x_tilde, &Qr::new(v)?, g_diag, b_sigma, sigma_xx)
}

/// Log conditional evidence under the two-component prior, up to a model-free
/// constant: ½log|A_G| − ½log|G(VᵀV)⁻¹G| + b²/(2σ_xx) x̃ᵀVA_GVᵀx̃.
pub fn two_component_log_evidence<T: Real>(
    x_tilde: &DVector<T>,
    qr: &Qr<T>,
    g_diag: &DVector<T>,
    b_sigma: T,
    sigma_xx: T,
) -> Result<T> {
    let tc = two_component_parts(x_tilde, qr, g_diag, b_sigma)?;
    let log_det_g = g_diag.iter().fold(T::zero(), |a, v| a + v.ln());
    let quad = tc.prec.inv_quad(&tc.vtx);
    Ok(-T::half() * tc.prec.ln_det() - log_det_g + qr.log_det_r() + b_sigma * b_sigma * quad / (T::two() * sigma_xx))
}

/// log CBF(M_i, M_j) under the two-component prior. Requires l = 1.
#[allow(clippy::too_many_arguments)]
pub fn log_cbf_two_component<T: Real>(
    m_i: &[bool],
    m_j: &[bool],
    x_tilde: &DMatrix<T>,
    g_c: T,
    c: T,
    part: &SigmaPartition<T>,
    d: &Dataset<T>,
) -> Result<T> {
    if x_tilde.ncols() != 1 || d.l() != 1 {
        return Err(Error::Unsupported(
            "the two-component prior has no closed-form conditional posterior for l > 1".into(),
        ));
    }
    let x = x_tilde.column(0).into_owned();
    let b = b_sigma(part)[(0, 0)];
    let sxx = part.sigma_xx[(0, 0)];
    let ev = |incl: &[bool]| -> Result<T> {
        let qr = Qr::new(&treatment_design(d.z(), incl))?;
        let gd = two_component_g_diag(incl, d.fixed_mask(), g_c, c);
        two_component_log_evidence(&x, &qr, &gd, b, sxx)
    };
    Ok(ev(m_i)? - ev(m_j)?)
}
