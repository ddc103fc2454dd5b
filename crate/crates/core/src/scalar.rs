//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All operators are written against [`Real`], so the same code runs in
//! `f32` and `f64`. The tolerances quoted throughout the documentation refer
//! to `f64`; `f32` builds are useful for smoke runs and memory-bound sweeps.

use core::fmt::{Debug, LowerExp};

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::ToPrimitive;

/// Real floating-point scalar: `f32` or `f64`.
pub trait Real: RealField + Copy + Default + Debug + LowerExp + ToPrimitive + Send + Sync + 'static {
    /// Converts an `f64` literal to this type.
    #[inline]
    fn lit(value: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(value).expect("finite literal")
    }

    #[inline]
    fn from_count(value: usize) -> Self {
        <Self as num_traits::FromPrimitive>::from_usize(value).expect("representable count")
    }

    #[inline]
    fn from_int(value: i64) -> Self {
        <Self as num_traits::FromPrimitive>::from_i64(value).expect("representable integer")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex scalar over a [`Real`].
pub type Cplx<T> = Complex<T>;

#[inline]
pub(crate) fn cplx<T: Real>(re: T, im: T) -> Cplx<T> {
    Complex::new(re, im)
}

#[inline]
pub(crate) fn creal<T: Real>(re: T) -> Cplx<T> {
    Complex::new(re, T::zero())
}

/// `|z|` without requiring `num_traits::Float` on `T`.
#[inline]
pub(crate) fn cabs<T: Real>(z: Cplx<T>) -> T {
    z.norm_sqr().sqrt()
}

/// `e^{iθ}`.
#[inline]
pub(crate) fn cis<T: Real>(theta: T) -> Cplx<T> {
    Complex::new(theta.cos(), theta.sin())
}
