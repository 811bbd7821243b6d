//! Scalar abstraction shared by every module.

use nalgebra::{Complex, DMatrix, RealField};
use num_traits::{FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};

/// Real floating point scalar the synthesis code is generic over.
///
/// Implemented for `f32` and `f64`. Tolerances that are expressed as `f64`
/// literals are converted with [`Real::lit`]; anything reported back to the
/// user goes through [`Real::as_f64`].
pub trait Real:
    RealField + Copy + Default + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    /// Lossless (for `f64`) or widening (for `f32`) conversion to `f64`.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the type.
    fn eps() -> Self {
        Self::default_epsilon()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex counterpart of `T`.
pub type Cplx<T> = Complex<T>;

/// Dense complex matrix over `T`.
pub type CMat<T> = DMatrix<Complex<T>>;

/// Lifts a real matrix into the complex field.
pub fn complexify<T: Real>(m: &DMatrix<T>) -> CMat<T> {
    m.map(|x| Complex::new(x, T::zero()))
}

/// The point `e^{jω}` on the unit circle.
pub fn unit_circle<T: Real>(omega: T) -> Complex<T> {
    Complex::new(omega.cos(), omega.sin())
}

/// `true` when every entry is finite.
pub fn all_finite<T: Real>(m: &DMatrix<T>) -> bool {
    m.iter().all(|x| x.is_finite())
}
