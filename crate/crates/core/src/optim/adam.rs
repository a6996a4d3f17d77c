use serde::{Deserialize, Serialize};

use crate::error::{MilError, Result};
use crate::milnet::Params;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
    pub weight_decay: f64,
    pub epochs: usize,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
            weight_decay: 0.0,
            epochs: 1,
        }
    }
}

impl AdamHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(MilError::config("learning_rate", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(MilError::config("beta1", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(MilError::config("beta2", "must lie in [0, 1)"));
        }
        if !(self.eps_hat > 0.0) {
            return Err(MilError::config("eps_hat", "must be > 0"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(MilError::config("weight_decay", "must be >= 0"));
        }
        if self.epochs == 0 {
            return Err(MilError::config("epochs", "must be >= 1"));
        }
        Ok(())
    }
}

/// First and second moment buffers, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &Params<T>) -> Self {
        let zeros: Vec<Vec<T>> = params
            .tensors()
            .iter()
            .map(|t| vec![T::zero(); t.len()])
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// Bias-corrected Adam on one tensor with decoupled weight decay:
/// `θ ← θ − lr·(m̂/(√v̂ + ε) + wd·θ)`. `t` is the already-incremented step.
pub fn adam_update<T: Scalar>(
    theta: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    t: u64,
    hyper: &AdamHyper,
) {
    let (b1, b2) = (T::of(hyper.beta1), T::of(hyper.beta2));
    let one = T::one();
    let bc1 = one - b1.powi(t as i32);
    let bc2 = one - b2.powi(t as i32);
    let lr = T::of(hyper.learning_rate);
    let eps = T::of(hyper.eps_hat);
    let wd = T::of(hyper.weight_decay);
    for i in 0..theta.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        theta[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * theta[i]);
    }
}

pub fn adam_step<T: Scalar>(
    params: &mut Params<T>,
    grads: &Params<T>,
    state: &mut AdamState<T>,
    hyper: &AdamHyper,
) -> Result<()> {
    if !params.same_shape(grads) {
        return Err(MilError::Dimension(
            "gradients do not match parameter shapes".into(),
        ));
    }
    let shapes_ok = {
        let tensors = params.tensors();
        state.m.len() == tensors.len()
            && state.v.len() == tensors.len()
            && tensors
                .iter()
                .zip(state.m.iter().zip(&state.v))
                .all(|(p, (m, v))| p.len() == m.len() && p.len() == v.len())
    };
    if !shapes_ok {
        return Err(MilError::Dimension(
            "optimizer state does not match parameter shapes".into(),
        ));
    }
    state.t += 1;
    let t = state.t;
    for (((theta, g), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        adam_update(theta, g, m, v, t, hyper);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milnet::Dims;
    use crate::optim::init_model;
    use proptest::prelude::*;

    fn one_step(theta: f64, g: f64, lr: f64, wd: f64) -> f64 {
        let hyper = AdamHyper {
            learning_rate: lr,
            weight_decay: wd,
            ..AdamHyper::default()
        };
        let mut th = [theta];
        adam_update(&mut th, &[g], &mut [0.0], &mut [0.0], 1, &hyper);
        th[0]
    }

    #[test]
    fn first_step_by_hand() {
        // m̂ = 1, v̂ = 1 after bias correction
        let expected = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8));
        assert!((one_step(1.0, 1.0, 0.1, 0.0) - expected).abs() < 1e-15);
        assert!((one_step(1.0, 1.0, 0.1, 0.0) - 0.9).abs() < 1e-8);
    }

    #[test]
    fn pure_decay() {
        assert!((one_step(1.0, 0.0, 0.1, 0.5) - 0.95).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_identity_without_decay() {
        let mut model = init_model::<f64>(&Dims::standard(3), 2.0, 5).unwrap();
        let before = model.params.clone();
        let zeros = model.params.zeros_like();
        let mut state = AdamState::new(&model.params);
        for _ in 0..3 {
            adam_step(&mut model.params, &zeros, &mut state, &AdamHyper::default()).unwrap();
        }
        assert_eq!(model.params, before);
        assert_eq!(state.t, 3);
    }

    #[test]
    fn shape_mismatch() {
        let mut a = init_model::<f64>(&Dims::standard(3), 2.0, 5).unwrap();
        let b = init_model::<f64>(&Dims::standard(4), 2.0, 5).unwrap();
        let mut state = AdamState::new(&a.params);
        assert!(adam_step(&mut a.params, &b.params, &mut state, &AdamHyper::default()).is_err());
    }

    #[test]
    fn hyper_validation() {
        assert!(AdamHyper {
            beta1: 1.0,
            ..AdamHyper::default()
        }
        .validate()
        .is_err());
        assert!(AdamHyper {
            learning_rate: 0.0,
            ..AdamHyper::default()
        }
        .validate()
        .is_err());
        assert!(AdamHyper {
            epochs: 0,
            ..AdamHyper::default()
        }
        .validate()
        .is_err());
        assert!(AdamHyper::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn zero_grad_with_empty_first_moment(theta in -10.0f64..10.0, v0 in 0.0f64..1.0, t in 1u64..100) {
            // a non-zero first moment keeps moving θ after the gradient vanishes
            let hyper = AdamHyper::default();
            let mut th = [theta];
            adam_update(&mut th, &[0.0], &mut [0.0], &mut [v0], t, &hyper);
            prop_assert_eq!(th[0], theta);
        }

        #[test]
        fn decay_shrinks_positive_weights(theta in 0.01f64..10.0, lr in 1e-4f64..0.5, wd in 1e-4f64..1.0) {
            prop_assume!(lr * wd < 1.0);
            let after = one_step(theta, 0.0, lr, wd);
            prop_assert!(after.abs() < theta);
        }
    }
}
