//! Hand-rolled Adam with bias correction, one state per parameter group.

use crate::num::Real;

#[derive(Debug, Clone)]
pub struct AdamState<T: Real> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            step: 0,
        }
    }

    /// Rebuild the state after densification: `keep[i]` maps new row i to an
    /// old row, `None` meaning a fresh (zero-moment) entry. `stride` is the
    /// number of scalars per row.
    pub fn remap(&self, keep: &[Option<usize>], stride: usize) -> Self {
        let mut out = Self::new(keep.len() * stride);
        out.step = self.step;
        for (new_row, old) in keep.iter().enumerate() {
            if let Some(old_row) = old {
                for k in 0..stride {
                    out.m[new_row * stride + k] = self.m[old_row * stride + k];
                    out.v[new_row * stride + k] = self.v[old_row * stride + k];
                }
            }
        }
        out
    }
}

/// Standard bias-corrected Adam update, in place.
pub fn adam_step<T: Real>(
    params: &mut [T],
    grads: &[T],
    state: &mut AdamState<T>,
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.step += 1;
    let t = state.step as i32;
    let bias1 = T::one() - beta1.powi(t);
    let bias2 = T::one() - beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = beta1 * state.m[i] + (T::one() - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (T::one() - beta2) * g * g;
        let m_hat = state.m[i] / bias1;
        let v_hat = state.v[i] / bias2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

pub fn adam_step_default<T: Real>(
    params: &mut [T],
    grads: &[T],
    state: &mut AdamState<T>,
    lr: T,
) {
    adam_step(
        params,
        grads,
        state,
        lr,
        T::lit(0.9),
        T::lit(0.999),
        T::lit(1e-8),
    );
}
