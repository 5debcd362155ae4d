use super::{Hyperparams, MlpParams};
use crate::num::Scalar;

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: MlpParams<T>,
    pub v: MlpParams<T>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(like: &MlpParams<T>) -> Self {
        AdamState { m: like.zeros_like(), v: like.zeros_like(), t: 0 }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step<T: Scalar>(
    params: &mut MlpParams<T>,
    grads: &MlpParams<T>,
    state: &mut AdamState<T>,
    hyper: &Hyperparams,
) {
    state.t += 1;
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let b1 = T::lit(hyper.adam_beta1);
    let b2 = T::lit(hyper.adam_beta2);
    let lr = T::lit(hyper.learning_rate);
    let eps = T::lit(hyper.adam_epsilon);
    let bc1 = T::one() - b1.powi(t);
    let bc2 = T::one() - b2.powi(t);
    let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);

    let g_all = grads.tensors();
    let m_all = state.m.tensors_mut();
    let v_all = state.v.tensors_mut();
    for (((theta, g), m), v) in params.tensors_mut().into_iter().zip(g_all).zip(m_all).zip(v_all) {
        for i in 0..theta.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + one_b1 * gi;
            v[i] = b2 * v[i] + one_b2 * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}
