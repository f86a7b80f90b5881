//! Dense kernels and reverse-mode differentiation.

mod matrix;
mod softmax;
mod tape;

pub use matrix::Matrix;
pub use softmax::softmax_temperature;
pub use tape::{sigmoid, Gradients, Tape, Var};

use crate::error::{Error, Result};

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    a.matmul(b)
}

/// Entry-wise operators available through [`elementwise`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Elementwise {
    Add,
    Mul,
    Tanh,
    Sigmoid,
    Scale(f64),
}

/// Applies an entry-wise operator. Binary operators take two operands of
/// equal shape; the rest take one.
pub fn elementwise(op: Elementwise, operands: &[&Matrix]) -> Result<Matrix> {
    let arity = match op {
        Elementwise::Add | Elementwise::Mul => 2,
        _ => 1,
    };
    if operands.len() != arity {
        return Err(Error::Argument(format!(
            "{op:?} takes {arity} operand(s), got {}",
            operands.len()
        )));
    }
    match op {
        Elementwise::Add => operands[0].add(operands[1]),
        Elementwise::Mul => operands[0].hadamard(operands[1]),
        Elementwise::Tanh => Ok(operands[0].map(f64::tanh)),
        Elementwise::Sigmoid => Ok(operands[0].map(sigmoid)),
        Elementwise::Scale(s) => Ok(operands[0].scale(s)),
    }
}
