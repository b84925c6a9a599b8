//! Reverse-mode differentiation over the grid primitives, plus a central
//! finite-difference checker used as the independent gradient oracle.

pub mod gradcheck;
pub mod tape;

pub use gradcheck::{grad_check, BlockCheck, GradCheckReport};
pub use tape::{complex_conv1x1, NodeGrads, Tape, Value, Var, POLAR_GRAD_EPS};

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::blocks::BlockMap;
use crate::tensor::grid::Tensor;

/// Gradient blocks keyed like the parameter store they were taken against.
pub type GradStore<T> = BlockMap<T>;

/// Gradients of the scalar `loss` with respect to every block of `params`.
/// Blocks that never entered the recorded computation get zero gradients.
pub fn backward<T: Scalar>(tape: &Tape<T>, loss: Var, params: &BlockMap<T>) -> Result<GradStore<T>> {
    let node_grads = tape.gradients(loss)?;
    let mut out = BlockMap::new();
    for (key, block) in params.iter() {
        let grad = tape
            .params()
            .iter()
            .find(|(k, _)| k == key)
            .and_then(|&(_, v)| node_grads.get(v))
            .map(|g| match g {
                Value::Tensor(t) => t.clone(),
                _ => unreachable!("parameter nodes hold tensors"),
            })
            .unwrap_or_else(|| Tensor::zeros(block.dims()));
        out.insert(key, grad)?;
    }
    Ok(out)
}
