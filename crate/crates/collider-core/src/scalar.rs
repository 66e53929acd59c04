//! Real scalar abstraction: the whole engine is generic over `f32`/`f64`
//! through this trait, with complex entries `Complex<T>` built on top.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst};

/// Floating-point scalar usable as the real base type of the engine.
pub trait Scalar:
    Float + FloatConst + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; tolerances and literals are written in
    /// `f64` and narrowed here.
    fn from_f64(x: f64) -> Self;

    fn to_f64_lossy(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }

    fn to_f64_lossy(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }

    fn to_f64_lossy(self) -> f64 {
        self
    }
}

/// Complex number over the engine scalar.
pub type C<T> = Complex<T>;

/// `re + 0i` as a complex value.
pub fn cre<T: Scalar>(re: T) -> C<T> {
    Complex::new(re, T::zero())
}

/// Complex value from `f64` parts.
pub fn c64<T: Scalar>(re: f64, im: f64) -> C<T> {
    Complex::new(T::from_f64(re), T::from_f64(im))
}

/// `-i` as a complex value, the ubiquitous generator prefactor.
pub fn minus_i<T: Scalar>() -> C<T> {
    Complex::new(T::zero(), -T::one())
}
