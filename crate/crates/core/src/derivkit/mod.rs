//! Differentiation kit: second-order spatial jets for residual evaluation
//! and a reverse-mode tape for exact parameter gradients of scalar losses.

pub mod jet;
pub mod scalar;
pub mod tape;

pub use jet::Jet2;
pub use scalar::Scalar;
pub use tape::{param_gradient, Gradients, Tape, TapeError, Var};

/// Errors raised by jet arithmetic.
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DerivError {
    #[error("division by a jet with zero value")]
    DivisionByZero,
}
