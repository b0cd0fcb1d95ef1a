//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every primitive applied to its [`Var`]s. Calling
//! [`Tape::backward`] on a scalar replays the adjoints in reverse recording
//! order and returns gradients for the parameter and variable leaves.
//!
//! Convolution is cross-correlation (no kernel flip), zero padded, with a
//! stride parameter. Max-pool ties route the adjoint to the first maximum in
//! scan order.

mod gemm;
mod kernels;
mod tape;

pub use kernels::PROB_FLOOR;
pub(crate) use kernels::window_out;
pub use tape::{Gradients, ParamId, Primitive, Tape, Var};

#[cfg(test)]
mod tests;
