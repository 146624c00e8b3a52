//! Scalar reverse-mode differentiation with one level of nesting.
//!
//! [`Tape`] records scalar operations. Input-gradients that need to appear
//! inside a loss are carried as forward tangents ([`DualVec`], [`Tangent`])
//! recorded on the same tape, so one reverse sweep yields the parameter
//! gradient of a loss that contains `∇ₓV`.

mod dual;
mod expr;
mod tape;

pub use dual::{DualVec, Tangent};
pub use expr::{record, Expr, Recording};
pub use tape::{dot, BinaryKind, Node, Run, Tape, UnaryKind, Var};

use crate::error::Result;

/// Exact reverse-mode gradient of the tape's scalar output with respect to `inputs`.
pub fn grad_inputs(tape: &Tape, inputs: &[Var]) -> Result<Vec<f64>> {
    tape.gradient(inputs)
}

/// Parameter gradient of a loss that may contain recorded input-gradients.
///
/// The tangent nodes are ordinary nodes, so this is the same reverse sweep as
/// [`grad_inputs`]; it is named separately to make call sites explicit about
/// differentiating through `∇ₓV`.
pub fn grad_params_of_grad_expr(tape: &Tape, params: &[Var]) -> Result<Vec<f64>> {
    tape.gradient(params)
}

/// A scalar value together with its exact input-gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct DualGradient {
    pub value: f64,
    pub input_grad: Vec<f64>,
}
