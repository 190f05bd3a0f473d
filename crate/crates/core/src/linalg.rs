//! Thin factorization wrappers used by the conditional posteriors.
//!
//! Design matrices go through [`Qr`]; the small (l+1)-sized covariance blocks go
//! through [`Spd`]. Nothing here forms an explicit inverse of a design Gram matrix.

use nalgebra::linalg::{Cholesky, QR};
use nalgebra::{DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Thin QR factorization A = Q₁R of a tall design matrix, normalized so that
/// diag(R) > 0.
pub struct Qr<T: Real> {
    qr: QR<T, Dyn, Dyn>,
    r: DMatrix<T>,
    sign: Vec<T>,
}

impl<T: Real> Qr<T> {
    /// Fails with [`Error::RankDeficient`] if some column is (numerically) in the
    /// span of its predecessors. The test is relative to each column's own norm,
    /// so rescaling a column never changes the verdict.
    pub fn new(a: &DMatrix<T>) -> Result<Self> {
        let (n, d) = a.shape();
        if d > n {
            return Err(Error::RankDeficient(format!("design ({n} rows, {d} columns)")));
        }
        let qr = QR::new(a.clone());
        let mut r = qr.r();
        let tol = T::lit(T::RANK_TOL);
        let mut sign = Vec::with_capacity(d);
        for j in 0..d {
            let col_norm = a.column(j).norm();
            let rjj = r[(j, j)];
            if !(col_norm > T::zero()) || !(rjj.abs() > tol * col_norm) {
                return Err(Error::RankDeficient(format!("design (column {j})")));
            }
            let s = if rjj < T::zero() { -T::one() } else { T::one() };
            if s < T::zero() {
                r.row_mut(j).neg_mut();
            }
            sign.push(s);
        }
        Ok(Self { qr, r, sign })
    }

    pub fn ncols(&self) -> usize {
        self.r.ncols()
    }

    pub fn r(&self) -> &DMatrix<T> {
        &self.r
    }

    /// Q₁ᵀv, the coordinates of the projection of v onto the column span.
    pub fn qt_vec(&self, v: &DVector<T>) -> DVector<T> {
        let mut w = v.clone();
        self.qr.q_tr_mul(&mut w);
        let d = self.ncols();
        let mut out = w.rows(0, d).into_owned();
        for (x, s) in out.iter_mut().zip(&self.sign) {
            *x *= *s;
        }
        out
    }

    /// Q₁ᵀM for an n×k matrix, giving d×k.
    pub fn qt_mat(&self, m: &DMatrix<T>) -> DMatrix<T> {
        let mut w = m.clone();
        self.qr.q_tr_mul(&mut w);
        let d = self.ncols();
        let mut out = w.rows(0, d).into_owned();
        for (i, s) in self.sign.iter().enumerate() {
            if *s < T::zero() {
                out.row_mut(i).neg_mut();
            }
        }
        out
    }

    /// ‖P v‖² = ‖Q₁ᵀv‖² for the orthogonal projector P onto the column span.
    pub fn proj_norm2(&self, v: &DVector<T>) -> T {
        self.qt_vec(v).norm_squared()
    }

    /// Solve R x = b.
    pub fn solve_r(&self, b: &DVector<T>) -> DVector<T> {
        self.r
            .solve_upper_triangular(b)
            .expect("R has a positive diagonal")
    }

    pub fn solve_r_mat(&self, b: &DMatrix<T>) -> DMatrix<T> {
        self.r
            .solve_upper_triangular(b)
            .expect("R has a positive diagonal")
    }

    /// Solve Rᵀ x = b.
    pub fn solve_rt(&self, b: &DVector<T>) -> DVector<T> {
        self.r
            .tr_solve_upper_triangular(b)
            .expect("R has a positive diagonal")
    }

    /// log|R| = ½ log|AᵀA|.
    pub fn log_det_r(&self) -> T {
        self.r.diagonal().iter().fold(T::zero(), |acc, x| acc + x.ln())
    }

    /// Least-squares coefficients (AᵀA)⁻¹Aᵀv.
    pub fn least_squares(&self, v: &DVector<T>) -> DVector<T> {
        self.solve_r(&self.qt_vec(v))
    }

    /// The diagonal entry j of (AᵀA)⁻¹, as ‖R⁻ᵀe_j‖².
    pub fn gram_inv_diag(&self, j: usize) -> T {
        let mut e = DVector::zeros(self.ncols());
        e[j] = T::one();
        self.solve_rt(&e).norm_squared()
    }
}

/// Cholesky factorization S = LLᵀ of a small symmetric positive definite matrix.
#[derive(Clone)]
pub struct Spd<T: Real> {
    chol: Cholesky<T, Dyn>,
}

impl<T: Real> Spd<T> {
    pub fn new(s: &DMatrix<T>) -> Result<Self> {
        if !s.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "expected a square matrix, got {}x{}",
                s.nrows(),
                s.ncols()
            )));
        }
        let sym = symmetrize(s);
        Cholesky::new(sym)
            .map(|chol| Self { chol })
            .ok_or_else(|| Error::numerical("matrix is not positive definite"))
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn l(&self) -> DMatrix<T> {
        self.chol.l()
    }

    pub fn ln_det(&self) -> T {
        self.chol.ln_determinant()
    }

    pub fn solve(&self, b: &DVector<T>) -> DVector<T> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<T>) -> DMatrix<T> {
        self.chol.solve(b)
    }

    /// L⁻¹b.
    pub fn solve_l(&self, b: &DVector<T>) -> DVector<T> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// L⁻ᵀb.
    pub fn solve_lt(&self, b: &DVector<T>) -> DVector<T> {
        self.chol
            .l_dirty()
            .tr_solve_lower_triangular(b)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// xᵀS⁻¹x.
    pub fn inv_quad(&self, x: &DVector<T>) -> T {
        self.solve_l(x).norm_squared()
    }

    /// S⁻¹, for the l×l blocks where an explicit inverse is part of the formula.
    pub fn inverse(&self) -> DMatrix<T> {
        symmetrize(&self.chol.inverse())
    }

    /// tr(S⁻¹ M).
    pub fn inv_trace(&self, m: &DMatrix<T>) -> T {
        self.solve_mat(m).trace()
    }
}

/// (M + Mᵀ)/2.
pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::half()
}

/// Solve the general square system A x = B via LU.
pub fn lu_solve<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<DMatrix<T>> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::numerical("singular system"))
}

pub fn ln_det_general<T: Real>(a: &DMatrix<T>) -> T {
    let lu = a.clone().lu();
    let u = lu.u();
    u.diagonal().iter().fold(T::zero(), |acc, x| acc + x.abs().ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn random(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, _| f64::std_normal(&mut rng))
    }

    #[test]
    fn qr_reproduces_gram_and_least_squares() {
        let a = random(30, 5, 1);
        let qr = Qr::new(&a).unwrap();
        let r = qr.r();
        assert!((r.transpose() * r - a.transpose() * &a).amax() < 1e-10);
        assert!(r.diagonal().iter().all(|x| *x > 0.0));
        let v = DVector::from_fn(30, |i, _| (i as f64).sin());
        let beta = qr.least_squares(&v);
        let normal = (a.transpose() * &a).lu().solve(&(a.transpose() * &v)).unwrap();
        assert!((beta - normal).amax() < 1e-10);
        let ata_inv = (a.transpose() * &a).try_inverse().unwrap();
        for j in 0..5 {
            assert!((qr.gram_inv_diag(j) - ata_inv[(j, j)]).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_norm_matches_explicit_projector() {
        let a = random(12, 3, 2);
        let v = DVector::from_fn(12, |i, _| i as f64 - 4.0);
        let p = &a * (a.transpose() * &a).try_inverse().unwrap() * a.transpose();
        let direct = (v.transpose() * &p * &v)[(0, 0)];
        assert!((Qr::new(&a).unwrap().proj_norm2(&v) - direct).abs() < 1e-9);
        let m = DMatrix::from_fn(12, 2, |i, j| ((i * (j + 1)) as f64).cos());
        let qm = Qr::new(&a).unwrap().qt_mat(&m);
        let direct = m.transpose() * &p * &m;
        assert!((qm.transpose() * &qm - direct).amax() < 1e-9);
    }

    #[test]
    fn duplicate_and_scaled_columns() {
        let mut a = random(10, 3, 3);
        let c0 = a.column(0).into_owned();
        a.set_column(2, &c0);
        assert!(matches!(Qr::new(&a), Err(Error::RankDeficient(_))));
        let mut b = random(10, 3, 4);
        b.column_mut(1).scale_mut(1e6);
        assert!(Qr::new(&b).is_ok());
        b.column_mut(2).scale_mut(1e-6);
        assert!(Qr::new(&b).is_ok());
    }

    #[test]
    fn spd_solves_and_quadratic_forms() {
        let a = random(8, 3, 5);
        let s = a.transpose() * &a + DMatrix::identity(3, 3);
        let spd = Spd::new(&s).unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let inv = s.clone().try_inverse().unwrap();
        assert!((spd.inv_quad(&x) - (x.transpose() * &inv * &x)[(0, 0)]).abs() < 1e-12);
        assert!((spd.ln_det() - s.determinant().ln()).abs() < 1e-12);
        assert!(Spd::new(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
    }
}
