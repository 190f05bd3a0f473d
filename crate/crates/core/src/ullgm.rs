//! Non-Gaussian observation layers on latent Gaussians: Poisson with log link,
//! Beta with logistic mean link, the Barker step for latent coordinates, the
//! dispersion update and set observations at the Beta boundary.

use nalgebra::DVector;
use rand::Rng;

use crate::adapt::{accept_prob, AdaptiveScale};
use crate::conditionals::SigmaPartition;
use crate::data::Family;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::special::{digamma, ln_gamma, log1pexp, logistic, reg_inc_beta};

/// Width of the boundary sets (0, w) and (1 − w, 1) for exact 0/1 Beta data.
pub const SET_WIDTH: f64 = 0.0005;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    Zero,
    One,
}

/// Which boundary set, if any, an observed Beta value belongs to.
pub fn boundary<T: Real>(x: T) -> Option<Bound> {
    if x == T::zero() {
        Some(Bound::Zero)
    } else if x == T::one() {
        Some(Bound::One)
    } else {
        None
    }
}

fn need_r<T: Real>(r: Option<T>) -> Result<T> {
    match r {
        Some(r) if r > T::zero() => Ok(r),
        _ => Err(Error::InvalidHyperparameter("Beta-logistic needs a positive dispersion".into())),
    }
}

fn check_support<T: Real>(family: Family, y: T) -> Result<()> {
    let ok = match family {
        Family::Gaussian => true,
        Family::PoissonLogNormal => y >= T::zero() && y.floor() == y,
        Family::BetaLogistic => y > T::zero() && y < T::one(),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::FamilyViolation {
            column: String::new(),
            row: 0,
            detail: format!("{y} is outside the support of {family:?}"),
        })
    }
}

/// log p(y | q). Gaussian columns carry no observation layer and return 0.
pub fn obs_loglik<T: Real>(family: Family, y: T, q: T, r: Option<T>) -> Result<T> {
    check_support(family, y)?;
    Ok(match family {
        Family::Gaussian => T::zero(),
        Family::PoissonLogNormal => poisson_loglik(y, q),
        Family::BetaLogistic => beta_loglik(y, q, need_r(r)?),
    })
}

/// d/dq log p(y | q).
pub fn obs_loglik_grad<T: Real>(family: Family, y: T, q: T, r: Option<T>) -> Result<T> {
    check_support(family, y)?;
    Ok(match family {
        Family::Gaussian => T::zero(),
        Family::PoissonLogNormal => y - q.exp(),
        Family::BetaLogistic => beta_grad(y, q, need_r(r)?),
    })
}

pub(crate) fn poisson_loglik<T: Real>(y: T, q: T) -> T {
    y * q - q.exp() - ln_gamma(y + T::one())
}

pub(crate) fn beta_loglik<T: Real>(x: T, q: T, r: T) -> T {
    let mu = logistic(q);
    let (a, b) = (mu * r, (T::one() - mu) * r);
    ln_gamma(r) - ln_gamma(a) - ln_gamma(b) + (a - T::one()) * x.ln() + (b - T::one()) * (-x).ln_1p()
}

pub(crate) fn beta_grad<T: Real>(x: T, q: T, r: T) -> T {
    let mu = logistic(q);
    let (a, b) = (mu * r, (T::one() - mu) * r);
    r * mu * (T::one() - mu) * (x.ln() - (-x).ln_1p() - digamma(a) + digamma(b))
}

/// Like [`obs_loglik`], but a Beta value sitting exactly on 0 or 1 scores the
/// log probability of its set observation, (0, SET_WIDTH) or (1 − SET_WIDTH, 1).
pub fn obs_log_score<T: Real>(family: Family, y: T, q: T, r: Option<T>) -> Result<T> {
    match (family, boundary(y)) {
        (Family::BetaLogistic, Some(bound)) => {
            let r = need_r(r)?;
            let mu = logistic(q);
            let (a, b) = (mu * r, (T::one() - mu) * r);
            let w = T::lit(SET_WIDTH);
            Ok(match bound {
                Bound::Zero => reg_inc_beta(a, b, w),
                Bound::One => reg_inc_beta(b, a, w),
            }
            .ln())
        }
        _ => obs_loglik(family, y, q, r),
    }
}

/// Observation log-likelihood and gradient without support checks.
pub(crate) fn obs_value_grad<T: Real>(family: Family, y: T, q: T, r: T) -> (T, T) {
    match family {
        Family::Gaussian => (T::zero(), T::zero()),
        Family::PoissonLogNormal => (poisson_loglik(y, q), y - q.exp()),
        Family::BetaLogistic => (beta_loglik(y, q, r), beta_grad(y, q, r)),
    }
}

/// Gradient of the outcome-latent full conditional at q_i, where
/// `resid` = ε_i − H_i Σ_xx⁻¹Σ_yxᵀ.
pub fn latent_outcome_grad<T: Real>(family: Family, y: T, q: T, r: Option<T>, resid: T, sigma_y_given_x: T) -> Result<T> {
    Ok(obs_loglik_grad(family, y, q, r)? - resid / sigma_y_given_x)
}

/// Log full conditional of q_i (up to a constant) and its gradient, given the
/// conditional mean U_iρ + H_i w.
pub fn latent_outcome_target<T: Real>(family: Family, y: T, r: T, mean: T, sigma_y_given_x: T) -> impl Fn(T) -> (T, T) {
    move |q| {
        let (v, g) = obs_value_grad(family, y, q, r);
        let d = q - mean;
        (v - d * d / (T::two() * sigma_y_given_x), g - d / sigma_y_given_x)
    }
}

/// Gradient of the full conditional of Q_ij: observation term, feedback through
/// the outcome residual, and the Gaussian term of the treatment residual H_i.
#[allow(clippy::too_many_arguments)]
pub fn latent_treatment_grad<T: Real>(
    family: Family,
    x: T,
    q: T,
    r: Option<T>,
    j: usize,
    eps_i: T,
    h_i: &DVector<T>,
    part: &SigmaPartition<T>,
) -> Result<T> {
    let w = &part.a_yx;
    let resid = eps_i - h_i.dot(w);
    let prior = part.sigma_xx_factor().solve(h_i)[j];
    Ok(obs_loglik_grad(family, x, q, r)? + w[j] * resid / part.sigma_y_given_x - prior)
}

/// Log full conditional of Q_ij (up to a constant) and its gradient, as a function
/// of the proposed value. `h_i` is the current treatment residual row; `prec_row`
/// is row j of Σ_xx⁻¹.
#[allow(clippy::too_many_arguments)]
pub fn latent_treatment_target<'a, T: Real>(
    family: Family,
    x: T,
    r: T,
    j: usize,
    current_q: T,
    eps_i: T,
    h_i: &'a DVector<T>,
    w: &'a DVector<T>,
    sigma_y_given_x: T,
    prec_row: &'a DVector<T>,
) -> impl Fn(T) -> (T, T) + 'a {
    let base_resid = eps_i - h_i.dot(w);
    let prec_h = prec_row.dot(h_i);
    let prec_jj = prec_row[j];
    move |q| {
        let delta = q - current_q;
        let (v, g) = obs_value_grad(family, x, q, r);
        let resid = base_resid - w[j] * delta;
        // hᵀPh changes through h_j only
        let ph_j = prec_h + prec_jj * delta;
        let quad = (T::two() * prec_h + prec_jj * delta) * delta;
        (
            v - resid * resid / (T::two() * sigma_y_given_x) - quad * T::half(),
            g + w[j] * resid / sigma_y_given_x - ph_j,
        )
    }
}

/// Barker proposal: z ~ N(0, scale²), move by +z with probability
/// logistic(grad·z) and by −z otherwise. Returns the proposal and the forward
/// half of the log correction, log1pexp(−(y − x)·grad).
pub fn barker_update<T: Real, R: Rng + ?Sized>(current: T, grad: T, scale: T, rng: &mut R) -> (T, T) {
    let z = T::std_normal(rng) * scale;
    let up = T::open01(rng) < logistic(grad * z);
    let step = if up { z } else { -z };
    (current + step, log1pexp(-step * grad))
}

/// Full Barker log correction log q(x | y) − log q(y | x).
pub fn barker_log_correction<T: Real>(x: T, y: T, gx: T, gy: T) -> T {
    log1pexp(-(y - x) * gx) - log1pexp(-(x - y) * gy)
}

/// One Barker MH step for a scalar target returning (value, gradient).
/// Returns the new point, its (value, gradient) and whether the move was taken.
pub fn barker_step<T: Real, R: Rng + ?Sized>(
    current: T,
    at_current: (T, T),
    target: impl Fn(T) -> (T, T),
    adapt: &mut AdaptiveScale,
    rng: &mut R,
) -> (T, (T, T), bool) {
    let (fx, gx) = at_current;
    let (y, fwd) = barker_update(current, gx, T::lit(adapt.scale()), rng);
    let (fy, gy) = target(y);
    let log_ratio = fy - fx + fwd - log1pexp(-(current - y) * gy);
    let alpha = accept_prob(log_ratio.f64());
    let accepted = fy.is_finite() && gy.is_finite() && T::open01(rng).f64() < alpha;
    adapt.record(if fy.is_finite() { alpha } else { 0.0 }, accepted);
    if accepted {
        (y, (fy, gy), true)
    } else {
        (current, at_current, false)
    }
}

fn dispersion_target<T: Real>(family: Family, observed: &[T], latent: &[T], log_r: T) -> T {
    let r = log_r.exp();
    let ll = observed
        .iter()
        .zip(latent)
        .fold(T::zero(), |acc, (&x, &q)| acc + obs_value_grad(family, x, q, r).0);
    // Exp(1) prior on r plus the log-scale Jacobian
    ll - r + log_r
}

/// Random-walk MH on log r with an Exp(1) prior on r. `observed` must already
/// have boundary values replaced by their set-observation draws.
pub fn update_dispersion<T: Real, R: Rng + ?Sized>(
    family: Family,
    observed: &[T],
    latent: &[T],
    current: T,
    adapt: &mut AdaptiveScale,
    rng: &mut R,
) -> Result<T> {
    if !family.has_dispersion() {
        return Err(Error::Unsupported(format!("{family:?} has no dispersion parameter")));
    }
    let lr = current.ln();
    let prop = lr + T::std_normal(rng) * T::lit(adapt.scale());
    let log_ratio = dispersion_target(family, observed, latent, prop) - dispersion_target(family, observed, latent, lr);
    let alpha = accept_prob(log_ratio.f64());
    let accepted = T::open01(rng).f64() < alpha;
    adapt.record(alpha, accepted);
    Ok(if accepted { prop.exp() } else { current })
}

/// Inverse CDF of Beta(a, b) restricted to (0, upper) by bisection on the
/// regularized incomplete beta function.
fn truncated_beta_lower<T: Real>(a: T, b: T, upper: T, u: T) -> T {
    let total = reg_inc_beta(a, b, upper);
    let target = u * total;
    if !(target > T::zero()) {
        // CDF underflows on the whole set: fall back to its x^a leading term
        return upper * u.powf(T::one() / a);
    }
    let (mut lo, mut hi) = (T::zero(), upper);
    for _ in 0..200 {
        let mid = (lo + hi) * T::half();
        if mid <= lo || mid >= hi {
            break;
        }
        if reg_inc_beta(a, b, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) * T::half()
}

/// Draw from Beta(μ(q)r, (1 − μ(q))r) truncated to the boundary set. The upper
/// set is handled by mirroring x ↦ 1 − x, which swaps the shapes.
pub fn set_observation_draw<T: Real, R: Rng + ?Sized>(bound: Bound, latent: T, r: T, rng: &mut R) -> T {
    let mu = logistic(latent);
    let (a, b) = (mu * r, (T::one() - mu) * r);
    let w = T::lit(SET_WIDTH);
    let u = T::open01(rng);
    let clamp = |x: T| {
        let tiny = w * T::lit(1e-300);
        if x <= T::zero() {
            tiny
        } else if x >= w {
            w * T::lit(1.0 - 1e-12)
        } else {
            x
        }
    };
    match bound {
        Bound::Zero => clamp(truncated_beta_lower(a, b, w, u)),
        Bound::One => T::one() - clamp(truncated_beta_lower(b, a, w, u)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditionals::partition_sigma;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn boundary_scores_are_set_probabilities() {
        use statrs::function::beta::beta_reg;
        let b = Family::BetaLogistic;
        let (q, r) = (0.4f64, 2.5);
        let mu = logistic(q);
        let lo = obs_log_score(b, 0.0, q, Some(r)).unwrap();
        assert!((lo - beta_reg(mu * r, (1.0 - mu) * r, SET_WIDTH).ln()).abs() < 1e-12);
        let hi = obs_log_score(b, 1.0, q, Some(r)).unwrap();
        assert!((hi - beta_reg((1.0 - mu) * r, mu * r, SET_WIDTH).ln()).abs() < 1e-12);
        let mid = obs_log_score(b, 0.3, q, Some(r)).unwrap();
        assert_eq!(mid, obs_loglik(b, 0.3, q, Some(r)).unwrap());
        // A saturated mean puts all mass on one endpoint.
        assert_eq!(obs_log_score(b, 1.0, 50.0, Some(1.0)).unwrap(), 0.0);
        assert_eq!(obs_log_score(b, 0.0, 50.0, Some(1.0)).unwrap(), f64::NEG_INFINITY);
        let p = Family::PoissonLogNormal;
        assert_eq!(obs_log_score(p, 3.0, 0.2, None).unwrap(), obs_loglik(p, 3.0, 0.2, None).unwrap());
    }

    #[test]
    fn loglik_examples() {
        let p = Family::PoissonLogNormal;
        assert!((obs_loglik(p, 0.0f64, 0.0, None).unwrap() + 1.0).abs() < 1e-15);
        let l2 = 2f64.ln();
        assert!((obs_loglik(p, 2.0, l2, None).unwrap() - (l2 - 2.0)).abs() < 1e-14);
        assert!(obs_loglik(Family::BetaLogistic, 0.5f64, 0.0, Some(2.0)).unwrap().abs() < 1e-14);
        assert!(obs_loglik(p, -1.0, 0.0, None).is_err());
        assert!(obs_loglik(p, 1.5, 0.0, None).is_err());
        assert!(obs_loglik(Family::BetaLogistic, 0.0, 0.0, Some(2.0)).is_err());
        assert!(obs_loglik(Family::BetaLogistic, 0.4, 0.0, None).is_err());
    }

    #[test]
    fn gradient_examples() {
        let p = Family::PoissonLogNormal;
        assert!((obs_loglik_grad(p, 0.0f64, 0.0, None).unwrap() + 1.0).abs() < 1e-15);
        assert!(obs_loglik_grad(p, 5.0, 5f64.ln(), None).unwrap().abs() < 1e-13);
    }

    #[test]
    fn outcome_grad_exogenous_is_observation_grad() {
        let g = latent_outcome_grad(Family::PoissonLogNormal, 3.0, 0.4, None, 0.0, 0.8).unwrap();
        assert_eq!(g, 3.0 - 0.4f64.exp());
    }

    #[test]
    fn treatment_target_gradient_matches_closed_form() {
        let s = DMatrix::from_row_slice(3, 3, &[1.2, 0.3, -0.2, 0.3, 0.9, 0.25, -0.2, 0.25, 1.1]);
        let part = partition_sigma(&s).unwrap();
        let prec = part.sigma_xx_factor().inverse();
        let h = DVector::from_vec(vec![0.3, -0.7]);
        let (x, q, eps) = (4.0f64, 1.1f64, 0.25f64);
        let row = prec.row(0).transpose();
        let target = latent_treatment_target(Family::PoissonLogNormal, x, 1.0, 0, q, eps, &h, &part.a_yx, part.sigma_y_given_x, &row);
        let g_closed = latent_treatment_grad(Family::PoissonLogNormal, x, q, None, 0, eps, &h, &part).unwrap();
        assert!((target(q).1 - g_closed).abs() < 1e-12);
    }

    #[test]
    fn barker_zero_gradient_is_symmetric() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let (y, _) = barker_update(0.0f64, 0.0, 1.0, &mut rng);
            sum += y;
            sq += y * y;
        }
        let mean = sum / n as f64;
        let se = (sq / n as f64 / n as f64).sqrt();
        assert!(mean.abs() < 4.0 * se);
    }

    #[test]
    fn barker_large_gradient_moves_up() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let (y, _) = barker_update(0.0f64, 1e6, 1.0, &mut rng);
            assert!(y >= 0.0);
        }
    }

    #[test]
    fn dispersion_accepts_uphill_moves() {
        // with every latent at 0 and x = 1/2, r has posterior ∝ Beta-likelihood × e^{-r}
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let obs = vec![0.5f64; 50];
        let lat = vec![0.0f64; 50];
        let mut adapt = AdaptiveScale::new(0.5, 0.234);
        let mut r = 1.0;
        for _ in 0..200 {
            r = update_dispersion(Family::BetaLogistic, &obs, &lat, r, &mut adapt, &mut rng).unwrap();
        }
        assert!(r > 1.0);
        assert!(update_dispersion(Family::PoissonLogNormal, &obs, &lat, 1.0, &mut adapt, &mut rng).is_err());
    }

    #[test]
    fn set_draws_stay_inside() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for &(q, r) in &[(0.0, 2.0), (-3.0, 0.5), (4.0, 30.0), (-8.0, 200.0)] {
            for _ in 0..200 {
                let z = set_observation_draw(Bound::Zero, q, r, &mut rng);
                assert!(z > 0.0 && z < SET_WIDTH, "{z}");
                let o = set_observation_draw(Bound::One, q, r, &mut rng);
                assert!(o > 1.0 - SET_WIDTH && o < 1.0, "{o}");
            }
        }
    }

    #[test]
    fn set_draw_mirror_symmetry() {
        let mut a = ChaCha20Rng::seed_from_u64(5);
        let mut b = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..100 {
            let z = set_observation_draw(Bound::Zero, 0.7f64, 3.0, &mut a);
            let o = set_observation_draw(Bound::One, -0.7, 3.0, &mut b);
            assert!((z - (1.0 - o)).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_detection() {
        assert_eq!(boundary(0.0), Some(Bound::Zero));
        assert_eq!(boundary(1.0), Some(Bound::One));
        assert_eq!(boundary(0.3), None);
    }
}
