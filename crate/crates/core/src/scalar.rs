//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Open01, StandardNormal};

/// Floating-point scalar usable by the sampler: `f32` or `f64`.
///
/// Arithmetic and transcendental functions come from [`RealField`]; this trait
/// adds literal conversion and the handful of random variates the sampler needs.
pub trait Real:
    RealField
    + Copy
    + Default
    + ToPrimitive
    + FromPrimitive
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Relative size of an R diagonal below which a design column counts as
    /// linearly dependent on its predecessors.
    const RANK_TOL: f64;

    /// Machine epsilon.
    const EPS: f64;

    fn lit(x: f64) -> Self;

    fn f64(self) -> f64;

    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Uniform on the open interval (0, 1).
    fn open01<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Gamma(shape, scale = 1). Panics on a non-positive or non-finite shape.
    fn gamma<R: Rng + ?Sized>(shape: Self, rng: &mut R) -> Self;

    /// Beta(a, b). Panics on non-positive parameters.
    fn beta<R: Rng + ?Sized>(a: Self, b: Self, rng: &mut R) -> Self;

    fn usize(n: usize) -> Self {
        Self::lit(n as f64)
    }

    fn half() -> Self {
        Self::lit(0.5)
    }

    fn two() -> Self {
        Self::lit(2.0)
    }

    fn infinity() -> Self {
        Self::lit(f64::INFINITY)
    }

    fn neg_infinity() -> Self {
        Self::lit(f64::NEG_INFINITY)
    }
}

macro_rules! impl_real {
    ($t:ty, $rank_tol:expr) => {
        impl Real for $t {
            const RANK_TOL: f64 = $rank_tol;
            const EPS: f64 = <$t>::EPSILON as f64;

            #[inline]
            fn lit(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn f64(self) -> f64 {
                self as f64
            }

            #[inline]
            fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            #[inline]
            fn open01<R: Rng + ?Sized>(rng: &mut R) -> Self {
                Open01.sample(rng)
            }

            fn gamma<R: Rng + ?Sized>(shape: Self, rng: &mut R) -> Self {
                Gamma::new(shape, 1.0)
                    .expect("gamma shape must be positive and finite")
                    .sample(rng)
            }

            fn beta<R: Rng + ?Sized>(a: Self, b: Self, rng: &mut R) -> Self {
                Beta::new(a, b)
                    .expect("beta parameters must be positive")
                    .sample(rng)
            }
        }
    };
}

impl_real!(f64, 1e-10);
impl_real!(f32, 1e-5);
