use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic scalar that jet slots and residual formulas are generic over.
///
/// Implemented by `f64` (plain evaluation) and [`crate::derivkit::Var`]
/// (reverse-mode tape), so the residual operators can be written once and
/// used both for pointwise evaluation and for adjoint seeding.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    fn value(&self) -> f64;
}

impl Scalar for f64 {
    fn value(&self) -> f64 {
        *self
    }
}
