//! Adam with bias correction.

use crate::neural::{Gradients, ModelParams, Scalar, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment buffers plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState<S> {
    pub t: u64,
    pub m: Vec<Tensor<S>>,
    pub v: Vec<Tensor<S>>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(params: &ModelParams<S>) -> AdamState<S> {
        AdamState {
            t: 0,
            m: params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect(),
            v: params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }
}

/// One update: `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
pub fn adam_step<S: Scalar>(
    tensors: &mut [Tensor<S>],
    grads: &Gradients<S>,
    state: &mut AdamState<S>,
    hyper: &AdamHyper,
) {
    state.t += 1;
    let t = state.t as i32;
    let b1 = S::from_f64(hyper.beta1);
    let b2 = S::from_f64(hyper.beta2);
    let one = S::one();
    let c1 = S::from_f64(1.0 / (1.0 - hyper.beta1.powi(t)));
    let c2 = S::from_f64(1.0 / (1.0 - hyper.beta2.powi(t)));
    let lr = S::from_f64(hyper.lr);
    let eps = S::from_f64(hyper.eps);

    for (ti, tensor) in tensors.iter_mut().enumerate() {
        let g = &grads.tensors[ti].data;
        let m = &mut state.m[ti].data;
        let v = &mut state.v[ti].data;
        for k in 0..tensor.data.len() {
            m[k] = b1 * m[k] + (one - b1) * g[k];
            v[k] = b2 * v[k] + (one - b2) * g[k] * g[k];
            let m_hat = m[k] * c1;
            let v_hat = v[k] * c2;
            tensor.data[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{init_params, Dims, Variant};

    fn setup() -> (crate::neural::ModelParams<f64>, Gradients<f64>, AdamState<f64>) {
        let params = init_params::<f64>(Variant::LstmCrop, Dims::tiny(), 3).unwrap();
        let grads = Gradients::zeros_like(&params);
        let state = AdamState::new(&params);
        (params, grads, state)
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let (mut params, grads, mut state) = setup();
        let before = params.tensors().to_vec();
        adam_step(params.tensors_mut(), &grads, &mut state, &AdamHyper::default());
        assert_eq!(params.tensors(), &before[..]);
    }

    #[test]
    fn first_step_magnitude_matches_closed_form() {
        let (mut params, mut grads, mut state) = setup();
        let before = params.tensors()[0].data[0];
        grads.tensors[0].data[0] = 1.0;
        let hyper = AdamHyper::default();
        adam_step(params.tensors_mut(), &grads, &mut state, &hyper);
        // m_hat = v_hat = 1 at t = 1, so the step is exactly -lr / (1 + eps)
        let expected = -hyper.lr / (1.0 + hyper.eps);
        let delta = params.tensors()[0].data[0] - before;
        assert!((delta - expected).abs() < 1e-18, "{delta} vs {expected}");
    }

    #[test]
    fn constant_gradient_step_approaches_lr() {
        let (mut params, mut grads, mut state) = setup();
        grads.tensors[0].data[0] = 0.37; // any constant
        let hyper = AdamHyper::default();
        let mut prev = params.tensors()[0].data[0];
        let mut last_delta = 0.0;
        for _ in 0..2000 {
            adam_step(params.tensors_mut(), &grads, &mut state, &hyper);
            let cur = params.tensors()[0].data[0];
            last_delta = (cur - prev).abs();
            prev = cur;
        }
        assert!((last_delta - hyper.lr).abs() < 1e-5, "step {last_delta}");
    }
}
