//! Conditional posteriors and evidences checked against dense joint-Gaussian
//! computations and Monte Carlo oracles.

use givbma::conditionals::*;
use givbma::data::{outcome_design, treatment_design, Dataset, Family};
use givbma::dist::{sample_iw, std_normal_matrix, std_normal_vector};
use givbma::linalg::Qr;
use givbma::priors::CovPriorSpec;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn dense_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let chol = cov.clone().cholesky().expect("covariance is positive definite");
    let r = x - mean;
    let z = chol.l().solve_lower_triangular(&r).unwrap();
    let ln_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    -0.5 * (x.len() as f64 * (2.0 * std::f64::consts::PI).ln() + ln_det + z.norm_squared())
}

fn projector(a: &DMatrix<f64>) -> DMatrix<f64> {
    let g = (a.transpose() * a).try_inverse().unwrap();
    a * g * a.transpose()
}

fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

fn dataset(n: usize, p: usize, l: usize, seed: u64) -> Dataset<f64> {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    let z: DMatrix<f64> = std_normal_matrix(n, p, &mut r);
    let x = std_normal_matrix::<f64, _>(n, l, &mut r) + z.columns(0, 1) * DMatrix::from_element(1, l, 0.5);
    Dataset::new(std_normal_vector(n, &mut r), x, z, Family::Gaussian, vec![Family::Gaussian; l], vec![false; p]).unwrap()
}

fn sigma3() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[1.4, 0.5, -0.3, 0.5, 1.1, 0.2, -0.3, 0.2, 0.9])
}

const MODELS: [[bool; 3]; 4] = [[false, false, false], [true, false, false], [true, true, false], [false, true, true]];

#[test]
fn outcome_cbf_matches_dense_marginal_likelihood() {
    let d = dataset(12, 3, 1, 11);
    let mut r = ChaCha20Rng::seed_from_u64(12);
    let yt: DVector<f64> = std_normal_vector(12, &mut r);
    for &(g, s) in &[(0.5, 0.7), (4.0, 1.3), (150.0, 2.0)] {
        // ỹ ~ N(0, σ(I + g P_U)) after integrating ρ out
        let dense = |incl: &[bool]| {
            let u = outcome_design(d.x(), d.z(), incl);
            let cov = (DMatrix::identity(12, 12) + projector(&u) * g) * s;
            dense_logpdf(&yt, &DVector::zeros(12), &cov)
        };
        for i in MODELS {
            for j in MODELS {
                let cbf = log_cbf_outcome(&i, &j, &yt, g, s, &d).unwrap();
                assert!((cbf - (dense(&i) - dense(&j))).abs() < 1e-9, "g = {g}");
            }
        }
    }
}

/// Given ε, vec X ~ N(vec(εΣ_yx/σ_yy) + (I ⊗ V)vec Λ, Ψ ⊗ I) with
/// Ψ = Σ_xx − Σ_xyΣ_yx/σ_yy and prior vec Λ ~ N(0, gΣ_xx ⊗ (VᵀV)⁻¹).
struct KroneckerOracle {
    shift: DVector<f64>,
    psi: DMatrix<f64>,
}

impl KroneckerOracle {
    fn new(eps: &DVector<f64>, s: &DMatrix<f64>) -> Self {
        let l = s.nrows() - 1;
        let syx = s.view((0, 1), (1, l)).into_owned();
        let sxx = s.view((1, 1), (l, l)).into_owned();
        let shift = vec_of(&(eps * &syx / s[(0, 0)]));
        let psi = &sxx - syx.transpose() * &syx / s[(0, 0)];
        Self { shift, psi }
    }

    fn log_evidence(&self, x: &DMatrix<f64>, v: &DMatrix<f64>, prior_col: &DMatrix<f64>, prior_row: &DMatrix<f64>) -> f64 {
        let n = x.nrows();
        let vk = kron(&DMatrix::identity(x.ncols(), x.ncols()), v);
        let cov = kron(&self.psi, &DMatrix::identity(n, n)) + &vk * kron(prior_col, prior_row) * vk.transpose();
        dense_logpdf(&vec_of(x), &self.shift, &cov)
    }

    fn posterior(&self, x: &DMatrix<f64>, v: &DMatrix<f64>, prior_col: &DMatrix<f64>, prior_row: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let l = x.ncols();
        let vk = kron(&DMatrix::identity(l, l), v);
        let noise_prec = kron(&self.psi.clone().try_inverse().unwrap(), &DMatrix::identity(x.nrows(), x.nrows()));
        let prior_prec = kron(prior_col, prior_row).try_inverse().unwrap();
        let prec = vk.transpose() * &noise_prec * &vk + prior_prec;
        let cov = prec.try_inverse().unwrap();
        let mean = &cov * vk.transpose() * noise_prec * (vec_of(x) - &self.shift);
        (mean, cov)
    }
}

#[test]
fn treatment_cbf_and_posterior_match_kronecker_oracle() {
    let d = dataset(10, 3, 2, 21);
    let s = sigma3();
    let part = partition_sigma(&s).unwrap();
    let mut r = ChaCha20Rng::seed_from_u64(22);
    let eps: DVector<f64> = std_normal_vector(10, &mut r);
    let oracle = KroneckerOracle::new(&eps, &s);
    for g in [0.3, 5.0, 80.0] {
        let tc = corrected_treatment(d.x(), &eps, &part, g).unwrap();
        let dense = |incl: &[bool]| {
            let v = treatment_design(d.z(), incl);
            let row = (v.transpose() * &v).try_inverse().unwrap();
            oracle.log_evidence(d.x(), &v, &(&part.sigma_xx * g), &row)
        };
        for i in MODELS {
            for j in MODELS {
                let cbf = log_cbf_treatment(&i, &j, &tc.x_tilde, &tc.a_sigma, &tc.b_sigma, g, &d).unwrap();
                assert!((cbf - (dense(&i) - dense(&j))).abs() < 1e-8, "g = {g}: {cbf} vs {}", dense(&i) - dense(&j));
            }
            let v = treatment_design(d.z(), &i);
            let row = (v.transpose() * &v).try_inverse().unwrap();
            let (mean, cov) = oracle.posterior(d.x(), &v, &(&part.sigma_xx * g), &row);
            let post = treatment_posterior(&tc.x_tilde, &v, &part, g).unwrap();
            assert!((vec_of(&post.mean) - mean).amax() < 1e-9);
            assert!((kron(&post.col_cov, &post.row_cov()) - cov).amax() < 1e-9);
        }
    }
}

#[test]
fn two_component_matches_kronecker_oracle() {
    let mut r = ChaCha20Rng::seed_from_u64(31);
    let n = 14;
    let z: DMatrix<f64> = std_normal_matrix(n, 3, &mut r);
    let x = z.column(0) * 0.7 + std_normal_vector::<f64, _>(n, &mut r);
    let mask = vec![true, true, false];
    let d = Dataset::new(
        std_normal_vector(n, &mut r),
        DMatrix::from_column_slice(n, 1, x.as_slice()),
        z,
        Family::Gaussian,
        vec![Family::Gaussian],
        mask.clone(),
    )
    .unwrap();
    let s = DMatrix::from_row_slice(2, 2, &[1.2, 0.45, 0.45, 0.8]);
    let part = partition_sigma(&s).unwrap();
    let eps: DVector<f64> = std_normal_vector(n, &mut r);
    let oracle = KroneckerOracle::new(&eps, &s);
    let tc = corrected_treatment(d.x(), &eps, &part, 1.0).unwrap();
    let models = [[true, false, false], [true, true, false], [false, true, true], [true, true, true]];
    for &(g_c, c) in &[(20.0, 0.1), (3.0, 4.0)] {
        let dense = |incl: &[bool]| {
            let v = treatment_design(d.z(), incl);
            let gd = two_component_g_diag(incl, &mask, g_c, c);
            let gm = DMatrix::from_diagonal(&gd);
            let row = &gm * (v.transpose() * &v).try_inverse().unwrap() * &gm;
            (v, row)
        };
        for i in models {
            let (v, row) = dense(&i);
            let (mean, cov) = oracle.posterior(d.x(), &v, &part.sigma_xx, &row);
            let gd = two_component_g_diag(&i, &mask, g_c, c);
            let post = two_component_posterior(
                &tc.x_tilde.column(0).into_owned(),
                &v,
                &gd,
                tc.b_sigma[(0, 0)],
                part.sigma_xx[(0, 0)],
            )
            .unwrap();
            assert!((&post.mean - mean).amax() < 1e-9);
            assert!((post.covariance() - cov).amax() < 1e-9);
            for j in models {
                let (vj, rowj) = dense(&j);
                let want = oracle.log_evidence(d.x(), &v, &part.sigma_xx, &row)
                    - oracle.log_evidence(d.x(), &vj, &part.sigma_xx, &rowj);
                let got = log_cbf_two_component(&i, &j, &tc.x_tilde, g_c, c, &part, &d).unwrap();
                assert!((got - want).abs() < 1e-8, "{got} vs {want}");
            }
        }
    }
}

#[test]
fn outcome_draws_match_posterior_moments() {
    let mut r = ChaCha20Rng::seed_from_u64(41);
    let u: DMatrix<f64> = std_normal_matrix(20, 3, &mut r);
    let y: DVector<f64> = std_normal_vector(20, &mut r);
    let post = outcome_posterior(&y, &u, 9.0, 0.5).unwrap();
    let cov = post.covariance();
    let n = 40_000;
    let mut sum = DVector::zeros(3);
    let mut sq = DMatrix::zeros(3, 3);
    for _ in 0..n {
        let x = post.sample(&mut r) - &post.mean;
        sum += &x;
        sq += &x * x.transpose();
    }
    let mean = sum / n as f64;
    let emp = sq / n as f64;
    for j in 0..3 {
        let se = (cov[(j, j)] / n as f64).sqrt();
        assert!(mean[j].abs() < 4.0 * se);
        assert!((emp[(j, j)] / cov[(j, j)] - 1.0).abs() < 0.05);
        assert!((post.marginal_var(j) - cov[(j, j)]).abs() < 1e-12);
    }
}

#[test]
fn matrix_normal_draws_match_kronecker_covariance() {
    let d = dataset(15, 3, 2, 51);
    let part = partition_sigma(&sigma3()).unwrap();
    let mut r = ChaCha20Rng::seed_from_u64(52);
    let eps: DVector<f64> = std_normal_vector(15, &mut r);
    let tc = corrected_treatment(d.x(), &eps, &part, 6.0).unwrap();
    let v = treatment_design(d.z(), &[true, false, true]);
    let post = treatment_posterior(&tc.x_tilde, &v, &part, 6.0).unwrap();
    let cov = kron(&post.col_cov, &post.row_cov());
    let k = cov.nrows();
    let n = 40_000;
    let mut sq = DMatrix::zeros(k, k);
    for _ in 0..n {
        let x = vec_of(&(post.sample(&mut r).unwrap() - &post.mean));
        sq += &x * x.transpose();
    }
    let emp = sq / n as f64;
    for i in 0..k {
        for j in 0..k {
            let se = ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)].powi(2)) / n as f64).sqrt();
            assert!((emp[(i, j)] - cov[(i, j)]).abs() < 5.0 * se, "({i}, {j})");
        }
    }
}

fn weighted_mean(vals: &[f64], w: &[f64]) -> (f64, f64) {
    let sw: f64 = w.iter().sum();
    let m = vals.iter().zip(w).map(|(v, w)| v * w).sum::<f64>() / sw;
    // delta-method standard error of a self-normalized estimator
    let var = vals.iter().zip(w).map(|(v, w)| (w / sw).powi(2) * (v - m).powi(2)).sum::<f64>();
    (m, var.sqrt())
}

/// Importance sampling from the plain inverse-Wishart posterior, reweighted by the
/// g-prior densities of ρ and Λ, is an independent route to the full conditional.
#[test]
fn exact_iw_draw_matches_importance_reweighting() {
    let mut r = ChaCha20Rng::seed_from_u64(61);
    let n = 25;
    let l = 2;
    let eps: DVector<f64> = std_normal_vector(n, &mut r);
    let h: DMatrix<f64> = std_normal_matrix::<f64, _>(n, l, &mut r) + &eps * DMatrix::from_row_slice(1, 2, &[0.4, -0.2]);
    let nu = 4.0;
    let gv: DMatrix<f64> = std_normal_matrix(3, l, &mut r);
    let terms = CoefficientPriorTerms {
        outcome_dim: 3,
        outcome_quad: 2.5,
        treatment_dim: 3,
        treatment_gram: gv.transpose() * &gv,
    };
    let feats = |s: &DMatrix<f64>| {
        let p = partition_sigma(s).unwrap();
        [p.sigma_y_given_x, p.a_yx[0], p.a_yx[1], p.sigma_xx[(0, 0)], p.sigma_xx[(0, 1)], s[(0, 1)]]
    };
    let m = 60_000;
    let mut exact = vec![Vec::with_capacity(m); 6];
    for _ in 0..m {
        let s = draw_sigma_iw(&eps, &h, nu, Some(&terms), &mut r).unwrap();
        for (k, f) in feats(&s).into_iter().enumerate() {
            exact[k].push(f);
        }
    }
    let (df, scale) = covariance_posterior_iw(&eps, &h, nu);
    let mut is = vec![Vec::with_capacity(4 * m); 6];
    let mut logw = Vec::with_capacity(4 * m);
    for _ in 0..4 * m {
        let s = sample_iw(df, &scale, &mut r).unwrap();
        let p = partition_sigma(&s).unwrap();
        let sxx_inv = p.sigma_xx.clone().try_inverse().unwrap();
        let lw = -0.5 * terms.outcome_dim as f64 * p.sigma_y_given_x.ln() - 0.5 * terms.outcome_quad / p.sigma_y_given_x
            - 0.5 * terms.treatment_dim as f64 * p.sigma_xx.determinant().ln()
            - 0.5 * (sxx_inv * &terms.treatment_gram).trace();
        logw.push(lw);
        for (k, f) in feats(&s).into_iter().enumerate() {
            is[k].push(f);
        }
    }
    let mx = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|v| (v - mx).exp()).collect();
    for k in 0..6 {
        let em = exact[k].iter().sum::<f64>() / m as f64;
        let ev = exact[k].iter().map(|v| (v - em).powi(2)).sum::<f64>() / m as f64;
        let (im, ise) = weighted_mean(&is[k], &w);
        let se = (ev / m as f64 + ise * ise).sqrt();
        assert!((em - im).abs() < 4.5 * se, "feature {k}: exact {em}, reweighted {im}, se {se}");
    }
}

/// The Cholesky sweep with l = 1, checked against two-dimensional quadrature of
/// the joint conditional of (a_yx, σ_{y|x}).
#[test]
fn cholesky_sweep_matches_quadrature() {
    let mut r = ChaCha20Rng::seed_from_u64(71);
    let n = 15;
    let eps: DVector<f64> = std_normal_vector(n, &mut r);
    let h: DMatrix<f64> = std_normal_matrix::<f64, _>(n, 1, &mut r) + DMatrix::from_column_slice(n, 1, (&eps * 0.5).as_slice());
    let nu = 5.0;
    let spec = CovPriorSpec::cholesky(0.5);
    let terms = CoefficientPriorTerms {
        outcome_dim: 2,
        outcome_quad: 1.5,
        treatment_dim: 2,
        treatment_gram: DMatrix::from_element(1, 1, 0.8),
    };
    let (c, dsc, omega) = (spec.c_shape(nu), spec.d_scale(), spec.omega_a);
    let hv = h.column(0).into_owned();
    let log_target = |a: f64, s: f64| {
        let rss = (&eps - &hv * a).norm_squared();
        -0.5 * a * a / omega - (c + 1.0) * s.ln() - dsc / s - 0.5 * (n + terms.outcome_dim) as f64 * s.ln()
            - 0.5 * (rss + terms.outcome_quad) / s
    };
    // grid over a and t = log σ, with Jacobian σ
    let (na, ns) = (400, 400);
    let (alo, ahi, tlo, thi) = (-3.0, 3.0, -4.0, 2.5);
    let mut lz = Vec::with_capacity(na * ns);
    for i in 0..na {
        let a = alo + (ahi - alo) * (i as f64 + 0.5) / na as f64;
        for j in 0..ns {
            let t = tlo + (thi - tlo) * (j as f64 + 0.5) / ns as f64;
            lz.push((a, t.exp(), log_target(a, t.exp()) + t));
        }
    }
    let mx = lz.iter().map(|v| v.2).fold(f64::NEG_INFINITY, f64::max);
    let tot: f64 = lz.iter().map(|v| (v.2 - mx).exp()).sum();
    let ea: f64 = lz.iter().map(|v| v.0 * (v.2 - mx).exp()).sum::<f64>() / tot;
    let es: f64 = lz.iter().map(|v| v.1 * (v.2 - mx).exp()).sum::<f64>() / tot;
    let (df, scale) = cholesky_sigma_xx_posterior(&h, nu, &spec, Some(&terms));
    let exx = scale[(0, 0)] / (df - 2.0);

    let iters = 60_000;
    let mut cur = 1.0;
    let (mut sa, mut ss, mut sx) = (Vec::new(), Vec::new(), Vec::new());
    for it in 0..iters + 500 {
        let s = draw_sigma_cholesky(&eps, &h, nu, &spec, cur, Some(&terms), &mut r).unwrap();
        let p = partition_sigma(&s).unwrap();
        cur = p.sigma_y_given_x;
        if it >= 500 {
            sa.push(p.a_yx[0]);
            ss.push(p.sigma_y_given_x);
            sx.push(p.sigma_xx[(0, 0)]);
        }
    }
    let batch_se = |v: &[f64]| {
        let b = 50;
        let len = v.len() / b;
        let means: Vec<f64> = (0..b).map(|k| v[k * len..(k + 1) * len].iter().sum::<f64>() / len as f64).collect();
        let m = means.iter().sum::<f64>() / b as f64;
        let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (b - 1) as f64;
        (m, (var / b as f64).sqrt())
    };
    let (ma, sea) = batch_se(&sa);
    let (ms, ses) = batch_se(&ss);
    let (mxx, sexx) = batch_se(&sx);
    assert!((ma - ea).abs() < 4.0 * sea, "a: {ma} vs {ea}");
    assert!((ms - es).abs() < 4.0 * ses, "σ: {ms} vs {es}");
    assert!((mxx - exx).abs() < 4.0 * sexx, "Σ_xx: {mxx} vs {exx}");
}

#[test]
fn outcome_evidence_is_scale_invariant_across_models() {
    let d = dataset(16, 3, 1, 81);
    let mut r = ChaCha20Rng::seed_from_u64(82);
    let yt: DVector<f64> = std_normal_vector(16, &mut r);
    let base = log_cbf_outcome(&[true, false, false], &[false, true, true], &yt, 7.0, 1.0, &d).unwrap();
    let scaled = log_cbf_outcome(&[true, false, false], &[false, true, true], &(&yt * 3.0), 7.0, 9.0, &d).unwrap();
    assert!((base - scaled).abs() < 1e-10);
    let qr = Qr::new(&outcome_design(d.x(), d.z(), &[true, true, true])).unwrap();
    assert!(qr.proj_norm2(&yt) <= yt.norm_squared() + 1e-12);
}
