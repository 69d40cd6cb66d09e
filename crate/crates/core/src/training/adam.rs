use crate::error::{Error, Result};
use crate::network::NetworkParams;
use crate::tensor::{Scalar, Tensor};

use super::fit::TrainConfig;

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &NetworkParams<T>) -> Self {
        let zeros: Vec<Tensor<T>> = params.tensors().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Parameters are left untouched when any
/// gradient is non-finite.
pub fn adam_step<T: Scalar>(
    params: &mut NetworkParams<T>,
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    config: &TrainConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::InvalidArgument(format!(
            "{} gradients and {} moment tensors for {} parameters",
            grads.len(),
            state.m.len(),
            params.len()
        )));
    }
    for ((name, p), g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                left: p.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
        if !g.all_finite() {
            return Err(Error::NonFinite(format!("gradient of `{name}` at step {}", state.t + 1)));
        }
    }
    state.t += 1;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (i, p) in params.tensors_mut().enumerate() {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            let gj = g[j].to_f64();
            let mj = b1 * m[j].to_f64() + (1.0 - b1) * gj;
            let vj = b2 * v[j].to_f64() + (1.0 - b2) * gj * gj;
            m[j] = T::from_f64(mj);
            v[j] = T::from_f64(vj);
            let update = config.learning_rate * (mj / c1) / ((vj / c2).sqrt() + config.adam_epsilon);
            *w = T::from_f64(w.to_f64() - update);
        }
    }
    Ok(())
}
