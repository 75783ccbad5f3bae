//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Relative pivot threshold below which an LU factorisation is declared singular.
    fn pivot_tol() -> Self;
}

impl Real for f64 {
    fn pivot_tol() -> Self {
        1e-13
    }
}

impl Real for f32 {
    fn pivot_tol() -> Self {
        1e-6
    }
}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("f64 literal representable in scalar type")
}

/// Lossy conversion back to `f64`, used for error payloads and reports.
#[inline]
pub fn to_f64<T: Real>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Infinity norm of a vector.
pub fn norm_inf<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// `‖a − b‖∞` for equal-length slices.
pub fn diff_inf<T: Real>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter()
        .zip(b)
        .fold(T::zero(), |m, (x, y)| m.max((*x - *y).abs()))
}

/// `‖a − b‖∞ / max(‖b‖∞, 1)`: relative difference with a unit floor.
pub fn rel_diff<T: Real>(a: &[T], b: &[T]) -> T {
    diff_inf(a, b) / norm_inf(b).max(T::one())
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

pub fn is_finite_slice<T: Real>(v: &[T]) -> bool {
    v.iter().all(|x| x.is_finite())
}
