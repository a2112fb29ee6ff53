//! Reverse-mode differentiation over dense `f64` arrays.
//!
//! Every forward pass records onto a fresh [`Tape`]; values are addressed by
//! [`Var`] handles and [`Tape::backward`] returns the gradients of a scalar
//! output with respect to every [`Tape::param`] leaf it depends on.

mod array;
mod tape;

pub use array::Tensor;
pub use tape::{Elementwise, Gradients, Index, Tape, Var};

pub(crate) use tape::sigmoid;

/// Default negative slope used by the attention layers.
pub const LEAKY_SLOPE: f64 = 0.2;
