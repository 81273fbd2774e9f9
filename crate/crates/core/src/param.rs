//! Learnable parameter: a value tensor paired with an accumulated gradient.

use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape().to_vec());
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }

    /// Resets the accumulated gradient to zero.
    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(0.0);
    }

    /// Copies the current value onto a tape as a leaf node.
    pub fn bind(&self, tape: &mut Tape) -> Var {
        tape.leaf(self.value.clone())
    }

    /// Adds `g` into the accumulated gradient (gradients accumulate across
    /// backward passes; callers zero them between optimizer steps).
    pub fn accumulate_grad(&mut self, g: &[f64]) {
        debug_assert_eq!(g.len(), self.grad.len());
        for (slot, gv) in self.grad.data_mut().iter_mut().zip(g) {
            *slot += gv;
        }
    }
}
