//! Densities and samplers for the inverse Wishart, inverse gamma and matrix normal laws.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Spd;
use crate::scalar::Real;
use crate::special::{ln_gamma, ln_multigamma, LN_2PI};

/// Draw from IW(df, scale) with density ∝ |X|^{−(df+k+1)/2} exp(−½ tr(scale X⁻¹)).
///
/// Bartlett decomposition: with scale = CCᵀ and AAᵀ ~ W(df, I), X = C A⁻ᵀA⁻¹Cᵀ.
pub fn sample_iw<T: Real, R: Rng + ?Sized>(df: T, scale: &DMatrix<T>, rng: &mut R) -> Result<DMatrix<T>> {
    let k = scale.nrows();
    if !(df > T::usize(k) - T::one()) {
        return Err(Error::InvalidHyperparameter(format!(
            "inverse Wishart needs df > k - 1 (df = {df}, k = {k})"
        )));
    }
    let c = Spd::new(scale)?.l();
    let mut a = DMatrix::<T>::zeros(k, k);
    for i in 0..k {
        let chi2 = T::two() * T::gamma((df - T::usize(i)) * T::half(), rng);
        a[(i, i)] = chi2.sqrt();
        for j in 0..i {
            a[(i, j)] = T::std_normal(rng);
        }
    }
    // T = C A⁻ᵀ solves A Tᵀ = Cᵀ.
    let tt = a
        .solve_lower_triangular(&c.transpose())
        .ok_or_else(|| Error::numerical("degenerate Bartlett factor"))?;
    let t = tt.transpose();
    Ok(crate::linalg::symmetrize(&(&t * t.transpose())))
}

/// log IW(x | df, scale).
pub fn iw_logpdf<T: Real>(x: &DMatrix<T>, df: T, scale: &DMatrix<T>) -> Result<T> {
    let k = x.nrows();
    let kt = T::usize(k);
    let sx = Spd::new(x)?;
    let ss = Spd::new(scale)?;
    Ok(df * T::half() * ss.ln_det()
        - df * kt * T::half() * T::two().ln()
        - ln_multigamma(k, df * T::half())
        - (df + kt + T::one()) * T::half() * sx.ln_det()
        - T::half() * sx.inv_trace(scale))
}

/// Draw from IG(shape, scale) with density ∝ x^{−shape−1} exp(−scale/x).
pub fn sample_ig<T: Real, R: Rng + ?Sized>(shape: T, scale: T, rng: &mut R) -> T {
    scale / T::gamma(shape, rng)
}

pub fn ig_logpdf<T: Real>(x: T, shape: T, scale: T) -> T {
    if !(x > T::zero()) {
        return T::neg_infinity();
    }
    shape * scale.ln() - ln_gamma(shape) - (shape + T::one()) * x.ln() - scale / x
}

/// log N(x | 0, s · (RᵀR)⁻¹) for an upper-triangular R, i.e. a g-prior-type
/// Gaussian whose precision factor is known.
pub fn mvn_logpdf_precision_factor<T: Real>(x: &DVector<T>, r: &DMatrix<T>, s: T) -> T {
    let d = T::usize(x.len());
    let rx = r * x;
    let log_det_r = r.diagonal().iter().fold(T::zero(), |a, v| a + v.abs().ln());
    -T::half() * d * (T::lit(LN_2PI) + s.ln()) + log_det_r - T::half() * rx.norm_squared() / s
}

/// Standard normal matrix of the given shape.
pub fn std_normal_matrix<T: Real, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<T> {
    let mut z = DMatrix::zeros(rows, cols);
    // Column-major fill keeps the draw order independent of nalgebra internals.
    for j in 0..cols {
        for i in 0..rows {
            z[(i, j)] = T::std_normal(rng);
        }
    }
    z
}

pub fn std_normal_vector<T: Real, R: Rng + ?Sized>(len: usize, rng: &mut R) -> DVector<T> {
    DVector::from_fn(len, |_, _| T::std_normal(rng))
}
