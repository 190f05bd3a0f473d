//! Gradients against central finite differences, the Barker kernel against
//! quadrature, and set observations against the truncated Beta CDF.

use givbma::adapt::{AdaptiveScale, BARKER_TARGET, RW_TARGET};
use givbma::conditionals::partition_sigma;
use givbma::data::Family;
use givbma::dist::sample_iw;
use givbma::special::{logistic, reg_inc_beta};
use givbma::ullgm::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Beta, Distribution};

const H: f64 = 1e-6;

fn fd(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    (f(x + H) - f(x - H)) / (2.0 * H)
}

fn random_obs(family: Family, rng: &mut ChaCha20Rng) -> (f64, f64, f64) {
    let q = rng.random_range(-3.0..3.0);
    let r = rng.random_range(0.3..20.0);
    let y = match family {
        Family::PoissonLogNormal => rng.random_range(0..30) as f64,
        _ => rng.random_range(0.01..0.99),
    };
    (y, q, r)
}

#[test]
fn observation_gradients_match_finite_differences() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    for family in [Family::PoissonLogNormal, Family::BetaLogistic] {
        for _ in 0..100 {
            let (y, q, r) = random_obs(family, &mut rng);
            let g = obs_loglik_grad(family, y, q, Some(r)).unwrap();
            let num = fd(|t| obs_loglik(family, y, t, Some(r)).unwrap(), q);
            assert!((g - num).abs() < 1e-5, "{family:?} y={y} q={q} r={r}: {g} vs {num}");
        }
    }
}

#[test]
fn outcome_latent_gradient_matches_finite_differences() {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    for family in [Family::PoissonLogNormal, Family::BetaLogistic] {
        for _ in 0..100 {
            let (y, q, r) = random_obs(family, &mut rng);
            let mean: f64 = rng.random_range(-2.0..2.0);
            let s: f64 = rng.random_range(0.2..3.0);
            let f = |t: f64| obs_loglik(family, y, t, Some(r)).unwrap() - (t - mean).powi(2) / (2.0 * s);
            let g = latent_outcome_grad(family, y, q, Some(r), q - mean, s).unwrap();
            assert!((g - fd(f, q)).abs() < 1e-5);
            let t = latent_outcome_target(family, y, r, mean, s);
            assert!((t(q).1 - g).abs() < 1e-12);
        }
    }
}

/// Full conditional of Q_ij from the dense joint density of (ε_i, H_i).
fn dense_treatment_logdensity(family: Family, x: f64, r: f64, eps_i: f64, h_i: &DVector<f64>, sigma: &DMatrix<f64>, j: usize, q: f64, q0: f64) -> f64 {
    let mut h = h_i.clone();
    h[j] += q - q0;
    let mut v = DVector::zeros(h.len() + 1);
    v[0] = eps_i;
    v.rows_mut(1, h.len()).copy_from(&h);
    let inv = sigma.clone().try_inverse().unwrap();
    obs_loglik(family, x, q, Some(r)).unwrap() - 0.5 * (v.transpose() * inv * &v)[(0, 0)]
}

#[test]
fn treatment_latent_gradient_matches_finite_differences() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    for l in [1usize, 2] {
        for family in [Family::PoissonLogNormal, Family::BetaLogistic] {
            for _ in 0..100 {
                let sigma = sample_iw(l as f64 + 4.0, &DMatrix::identity(l + 1, l + 1), &mut rng).unwrap();
                let part = partition_sigma(&sigma).unwrap();
                let (x, q, r) = random_obs(family, &mut rng);
                let h = DVector::from_fn(l, |_, _| rng.random_range(-1.5..1.5));
                let eps = rng.random_range(-1.5..1.5);
                let j = rng.random_range(0..l);
                let g = latent_treatment_grad(family, x, q, Some(r), j, eps, &h, &part).unwrap();
                let num = fd(|t| dense_treatment_logdensity(family, x, r, eps, &h, &sigma, j, t, q), q);
                assert!((g - num).abs() < 1e-5, "l={l} {family:?}: {g} vs {num}");
                let prec = part.sigma_xx_factor().inverse();
                let row = prec.row(j).transpose();
                let target = latent_treatment_target(family, x, r, j, q, eps, &h, &part.a_yx, part.sigma_y_given_x, &row);
                let t0 = dense_treatment_logdensity(family, x, r, eps, &h, &sigma, j, q, q);
                for t in [q - 0.7, q + 0.4] {
                    let diff = dense_treatment_logdensity(family, x, r, eps, &h, &sigma, j, t, q) - t0;
                    assert!((target(t).0 - target(q).0 - diff).abs() < 1e-9);
                    let num = fd(|u| target(u).0, t);
                    assert!((target(t).1 - num).abs() < 1e-5);
                }
            }
        }
    }
}

#[test]
fn exogenous_treatment_gradient_drops_feedback_term() {
    let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 2.0, 0.5, 0.0, 0.5, 1.0]);
    let part = partition_sigma(&sigma).unwrap();
    let h = DVector::from_vec(vec![0.3, 0.0]);
    let g = latent_treatment_grad(Family::PoissonLogNormal, 2.0, 0.1, None, 1, 5.0, &h, &part).unwrap();
    let prior = part.sigma_xx_factor().solve(&h)[1];
    assert!((g - (2.0 - 0.1f64.exp() - prior)).abs() < 1e-14);
    // column 0's residual affects Q_1 only through Σ_xx⁻¹; with a diagonal Σ_xx it does not
    let diag = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0]);
    let part = partition_sigma(&diag).unwrap();
    let a = latent_treatment_grad(Family::PoissonLogNormal, 2.0, 0.1, None, 1, 5.0, &DVector::from_vec(vec![0.3, 0.2]), &part).unwrap();
    let b = latent_treatment_grad(Family::PoissonLogNormal, 2.0, 0.1, None, 1, 5.0, &DVector::from_vec(vec![-4.0, 0.2]), &part).unwrap();
    assert_eq!(a, b);
}

#[test]
fn barker_chain_matches_quadrature_quantiles() {
    // q ~ N(0.5, 0.8), y | q ~ Poisson(e^q), y = 4
    let (y, m, v) = (4.0, 0.5, 0.8);
    let target = latent_outcome_target(Family::PoissonLogNormal, y, 1.0, m, v);
    let mut adapt = AdaptiveScale::new(1.0, BARKER_TARGET);
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let mut x = 0.0;
    let mut fx = target(x);
    let burn = 10_000;
    let steps = 1_000_000;
    let mut draws = Vec::with_capacity(steps);
    for it in 0..burn + steps {
        if it == burn {
            adapt.freeze();
        }
        let (nx, nf, _) = barker_step(x, fx, &target, &mut adapt, &mut rng);
        x = nx;
        fx = nf;
        if it >= burn {
            draws.push(x);
        }
    }
    draws.sort_by(f64::total_cmp);
    // quadrature CDF on a fine grid
    let (lo, hi, k) = (-6.0, 6.0, 200_000);
    let dx = (hi - lo) / k as f64;
    let dens: Vec<f64> = (0..k).map(|i| target(lo + (i as f64 + 0.5) * dx).0.exp()).collect();
    let tot: f64 = dens.iter().sum();
    let quantile = |p: f64| {
        let mut acc = 0.0;
        for (i, d) in dens.iter().enumerate() {
            acc += d / tot;
            if acc >= p {
                return lo + (i as f64 + 0.5) * dx;
            }
        }
        hi
    };
    let sd = {
        let mean = dens.iter().enumerate().map(|(i, d)| (lo + (i as f64 + 0.5) * dx) * d).sum::<f64>() / tot;
        (dens.iter().enumerate().map(|(i, d)| (lo + (i as f64 + 0.5) * dx - mean).powi(2) * d).sum::<f64>() / tot).sqrt()
    };
    for p in [0.05, 0.25, 0.5, 0.75, 0.95] {
        let emp = draws[(p * steps as f64) as usize];
        let want = quantile(p);
        // 2% of the posterior spread
        assert!((emp - want).abs() < 0.02 * 4.0 * sd, "p={p}: {emp} vs {want}");
    }
    let rate = adapt.acceptance_rate();
    assert!(rate > 0.4 && rate < 0.75, "{rate}");
}

#[test]
fn set_observation_matches_truncated_cdf() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    for &(q, r) in &[(-1.0, 2.0), (0.5, 0.7)] {
        let mu: f64 = logistic(q);
        let (a, b) = (mu * r, (1.0 - mu) * r);
        let n = 100_000;
        let mut xs: Vec<f64> = (0..n).map(|_| set_observation_draw(Bound::Zero, q, r, &mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let total = reg_inc_beta(a, b, SET_WIDTH);
        let mut sup: f64 = 0.0;
        for (i, x) in xs.iter().enumerate() {
            let f = reg_inc_beta(a, b, *x) / total;
            sup = sup.max((f - i as f64 / n as f64).abs()).max((f - (i + 1) as f64 / n as f64).abs());
        }
        assert!(sup < 0.01, "q={q} r={r}: {sup}");
    }
}

#[test]
fn dispersion_recovers_unit_r() {
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let n = 500;
    let q: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
    let x: Vec<f64> = q
        .iter()
        .map(|&qi| {
            let mu: f64 = logistic(qi);
            Beta::new(mu, 1.0 - mu).unwrap().sample(&mut rng).clamp(1e-12, 1.0 - 1e-12)
        })
        .collect();
    let mut adapt = AdaptiveScale::new(0.3, RW_TARGET);
    let mut r = 3.0;
    let mut sum = 0.0;
    let (burn, iters) = (1000, 8000);
    for it in 0..burn + iters {
        if it == burn {
            adapt.freeze();
            adapt.steps = 0;
            adapt.accepted = 0;
        }
        r = update_dispersion(Family::BetaLogistic, &x, &q, r, &mut adapt, &mut rng).unwrap();
        if it >= burn {
            sum += r;
        }
    }
    let mean = sum / iters as f64;
    assert!((0.7..=1.4).contains(&mean), "{mean}");
    let rate = adapt.acceptance_rate();
    assert!((rate - 0.234).abs() < 0.05, "{rate}");
}
