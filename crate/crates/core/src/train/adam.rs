use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::blocks::BlockMap;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter block, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState<T> {
    pub m: BlockMap<T>,
    pub v: BlockMap<T>,
    pub t: u64,
}

impl<T: Scalar> OptimState<T> {
    pub fn new(params: &BlockMap<T>) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Per-element arithmetic is done in f64
/// and rounded once into the parameter precision.
pub fn adam_step<T: Scalar>(
    params: &mut BlockMap<T>,
    grads: &BlockMap<T>,
    state: &mut OptimState<T>,
    hp: &AdamConfig,
) -> Result<()> {
    if !params.same_layout(grads) || !params.same_layout(&state.m) || !params.same_layout(&state.v) {
        return Err(Error::shape("adam: parameter, gradient and moment layouts differ"));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    let blocks = params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()));
    for (((_, p), (_, g)), ((_, m), (_, v))) in blocks {
        let it = p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
        for ((p, &g), (m, v)) in it {
            let g = g.as_f64();
            let m1 = hp.beta1 * m.as_f64() + (1.0 - hp.beta1) * g;
            let v1 = hp.beta2 * v.as_f64() + (1.0 - hp.beta2) * g * g;
            *m = T::of(m1);
            *v = T::of(v1);
            let step = hp.lr * (m1 / c1) / ((v1 / c2).sqrt() + hp.eps);
            *p = T::of(p.as_f64() - step);
        }
    }
    Ok(())
}
