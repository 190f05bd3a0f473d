//! Special functions and small numerical helpers.

use crate::scalar::Real;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;
pub const LN_PI: f64 = 1.144_729_885_849_400_2;

/// log Γ(x) for x > 0.
pub fn ln_gamma<T: Real>(x: T) -> T {
    if x < T::half() {
        // Reflection keeps the Lanczos sum in its accurate range.
        let pi = T::pi();
        return (pi / (pi * x).sin().abs()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut a = T::lit(LANCZOS[0]);
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += T::lit(*c) / (x + T::usize(i));
    }
    let t = x + T::lit(LANCZOS_G + 0.5);
    T::lit(0.5 * LN_2PI) + (x + T::half()) * t.ln() - t + a.ln()
}

/// Digamma ψ(x) for x > 0: upward recurrence to x ≥ 10, then the asymptotic series.
pub fn digamma<T: Real>(x: T) -> T {
    let mut x = x;
    let mut acc = T::zero();
    let ten = T::lit(10.0);
    while x < ten {
        acc -= T::one() / x;
        x += T::one();
    }
    let inv = T::one() / x;
    let inv2 = inv * inv;
    // Bernoulli terms B_2k / (2k), k = 1..7
    let series = inv2
        * (T::lit(1.0 / 12.0)
            - inv2
                * (T::lit(1.0 / 120.0)
                    - inv2
                        * (T::lit(1.0 / 252.0)
                            - inv2
                                * (T::lit(1.0 / 240.0)
                                    - inv2
                                        * (T::lit(1.0 / 132.0)
                                            - inv2
                                                * (T::lit(691.0 / 32760.0)
                                                    - inv2 * T::lit(1.0 / 12.0)))))));
    acc + x.ln() - T::half() * inv - series
}

pub fn ln_beta<T: Real>(a: T, b: T) -> T {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

pub fn ln_choose(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_gamma((n + 1) as f64) - ln_gamma((k + 1) as f64) - ln_gamma((n - k + 1) as f64)
}

/// log Γ_k(x), the multivariate gamma function.
pub fn ln_multigamma<T: Real>(k: usize, x: T) -> T {
    let mut s = T::lit(k as f64 * (k as f64 - 1.0) / 4.0 * LN_PI);
    for j in 1..=k {
        s += ln_gamma(x + T::lit((1.0 - j as f64) / 2.0));
    }
    s
}

pub fn logistic<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn logit<T: Real>(p: T) -> T {
    (p / (T::one() - p)).ln()
}

/// log(1 + eˣ) without overflow.
pub fn log1pexp<T: Real>(x: T) -> T {
    if x > T::lit(35.0) {
        x
    } else if x < T::lit(-37.0) {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn normal_logpdf<T: Real>(x: T, mean: T, var: T) -> T {
    let d = x - mean;
    -T::half() * (T::lit(LN_2PI) + var.ln() + d * d / var)
}

pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let mut m = T::neg_infinity();
    for &x in xs {
        if x > m {
            m = x;
        }
    }
    if m == T::neg_infinity() || m == T::infinity() {
        return m;
    }
    let mut s = T::zero();
    for &x in xs {
        s += (x - m).exp();
    }
    m + s.ln()
}

pub fn log_mean_exp<T: Real>(xs: &[T]) -> T {
    log_sum_exp(xs) - T::usize(xs.len()).ln()
}

/// Regularized incomplete beta function I_x(a, b).
pub fn reg_inc_beta<T: Real>(a: T, b: T, x: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    if x >= T::one() {
        return T::one();
    }
    // Degenerate shapes put all mass on one endpoint.
    if a <= T::zero() {
        return T::one();
    }
    if b <= T::zero() {
        return T::zero();
    }
    let ln_front = a * x.ln() + b * (T::one() - x).ln() - ln_beta(a, b);
    if x < (a + T::one()) / (a + b + T::two()) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        T::one() - ln_front.exp() * beta_cf(b, a, T::one() - x) / b
    }
}

/// Continued fraction for the incomplete beta, modified Lentz.
fn beta_cf<T: Real>(a: T, b: T, x: T) -> T {
    let tiny = T::lit(1e-30);
    let tol = T::lit(T::EPS);
    let one = T::one();
    let qab = a + b;
    let qap = a + one;
    let qam = a - one;
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = one / d;
    let mut h = d;
    for m in 1..=500 {
        let m = T::usize(m);
        let m2 = T::two() * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        let del = d * c;
        h *= del;
        if (del - one).abs() <= tol {
            break;
        }
    }
    h
}

/// Gauss–Hermite rule for expectations under N(0, 1): returns (nodes, weights)
/// with Σ wᵢ f(xᵢ) ≈ E f(Z) and Σ wᵢ = 1.
pub fn gauss_hermite_normal(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    // Physicists' nodes by Newton iteration on the orthonormal recurrence.
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let nodes = x.iter().rev().map(|v| v * std::f64::consts::SQRT_2).collect();
    let weights = w.iter().rev().map(|v| v / sqrt_pi).collect();
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::{beta as sbeta, gamma as sgamma};

    #[test]
    fn ln_gamma_matches_reference() {
        for &x in &[1e-3, 0.1, 0.5, 1.0, 1.5, 2.0, 3.7, 10.0, 55.5, 1e3, 1e6] {
            let r = sgamma::ln_gamma(x);
            assert!((ln_gamma(x) - r).abs() < 1e-12 * r.abs().max(1.0), "x = {x}");
        }
        assert!(ln_gamma(1.0f64).abs() < 1e-15);
        assert!((ln_gamma(5.0f64) - 24f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn digamma_within_1e12_on_wide_range() {
        let mut x = 1e-3;
        while x < 1e6 {
            let r = sgamma::digamma(x);
            assert!((digamma(x) - r).abs() < 1e-12 * r.abs().max(1.0), "x = {x}");
            x *= 1.37;
        }
        // ψ(1) = −γ
        assert!((digamma(1.0f64) + 0.577_215_664_901_532_9).abs() < 1e-14);
    }

    #[test]
    fn reg_inc_beta_matches_reference() {
        for &(a, b) in &[(0.5, 0.5), (2.0, 3.0), (0.05, 7.0), (30.0, 0.2), (1.0, 1.0)] {
            for &x in &[1e-8, 1e-4, 0.01, 0.3, 0.5, 0.77, 0.9999] {
                let r = sbeta::beta_reg(a, b, x);
                assert!((reg_inc_beta(a, b, x) - r).abs() < 1e-12, "{a} {b} {x}");
            }
        }
    }

    #[test]
    fn reg_inc_beta_degenerate_shapes() {
        assert_eq!(reg_inc_beta(0.0f64, 2.0, 0.3), 1.0);
        assert_eq!(reg_inc_beta(2.0f64, 0.0, 0.3), 0.0);
    }

    #[test]
    fn log1pexp_and_logistic_are_stable() {
        assert_eq!(log1pexp(1000.0f64), 1000.0);
        assert!(log1pexp(-1000.0f64) >= 0.0);
        assert!((log1pexp(0.0f64) - 2f64.ln()).abs() < 1e-15);
        assert!((logistic(0.0f64) - 0.5).abs() < 1e-16);
        assert!(logistic(-800.0f64) >= 0.0 && logistic(800.0f64) <= 1.0);
        assert!((logit(logistic(1.3f64)) - 1.3).abs() < 1e-13);
    }

    #[test]
    fn gauss_hermite_integrates_normal_moments() {
        for n in [8, 16, 64] {
            let (x, w) = gauss_hermite_normal(n);
            let m0: f64 = w.iter().sum();
            let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
            let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
            assert!((m0 - 1.0).abs() < 1e-12);
            assert!((m2 - 1.0).abs() < 1e-11);
            assert!((m4 - 3.0).abs() < 1e-10);
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn log_mean_exp_handles_spread() {
        let v = [-1000.0f64, -1000.0 + 2f64.ln()];
        assert!((log_mean_exp(&v) - (-1000.0 + 1.5f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn ln_multigamma_reduces_to_ln_gamma() {
        assert!((ln_multigamma(1, 3.3f64) - ln_gamma(3.3)).abs() < 1e-15);
        let two = ln_multigamma(2, 2.0f64);
        let direct = 0.5 * LN_PI + ln_gamma(2.0) + ln_gamma(1.5);
        assert!((two - direct).abs() < 1e-14);
    }
}
