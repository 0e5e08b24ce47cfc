//! Bias-corrected ADAM with decoupled weight decay.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::EstimatorError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 5e-5,
        }
    }
}

/// Per-parameter first/second moment accumulators and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F: Float> {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<F>,
    v: Vec<F>,
}

impl<F: Float> AdamState<F> {
    pub fn new(config: AdamConfig, param_count: usize) -> Self {
        Self {
            config,
            step: 0,
            m: vec![F::zero(); param_count],
            v: vec![F::zero(); param_count],
        }
    }
}

/// One update: decoupled weight decay `w -= lr*wd*w` first, then the
/// bias-corrected adaptive step.
pub fn adam_step<F: Float>(
    state: &mut AdamState<F>,
    params: &mut [F],
    grad: &[F],
) -> Result<(), EstimatorError> {
    if params.len() != state.m.len() {
        return Err(EstimatorError::ShapeMismatch(params.len(), state.m.len()));
    }
    if grad.len() != params.len() {
        return Err(EstimatorError::ShapeMismatch(grad.len(), params.len()));
    }
    let cfg = state.config;
    state.step += 1;
    let t = state.step as i32;
    let lr = F::from(cfg.learning_rate).unwrap();
    let b1 = F::from(cfg.beta1).unwrap();
    let b2 = F::from(cfg.beta2).unwrap();
    let eps = F::from(cfg.epsilon).unwrap();
    let one = F::one();
    let corr1 = one - b1.powi(t);
    let corr2 = one - b2.powi(t);
    let wd = F::from(cfg.weight_decay).unwrap();

    for i in 0..params.len() {
        if cfg.weight_decay != 0.0 {
            params[i] = params[i] - lr * wd * params[i];
        }
        state.m[i] = b1 * state.m[i] + (one - b1) * grad[i];
        state.v[i] = b2 * state.v[i] + (one - b2) * grad[i] * grad[i];
        let m_hat = state.m[i] / corr1;
        let v_hat = state.v[i] / corr2;
        params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lr: f64, wd: f64) -> AdamConfig {
        AdamConfig {
            learning_rate: lr,
            weight_decay: wd,
            ..AdamConfig::default()
        }
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        let mut state = AdamState::<f64>::new(cfg(1e-3, 0.0), 1);
        let mut w = vec![0.0f64];
        adam_step(&mut state, &mut w, &[1.0]).unwrap();
        // m_hat = g, v_hat = g^2, so the step is -lr * g/(|g| + eps_hat)
        assert!((w[0] + 1e-3).abs() < 1e-9, "w = {}", w[0]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn zero_grad_without_decay_leaves_weights() {
        let mut state = AdamState::<f64>::new(cfg(1e-3, 0.0), 3);
        let mut w = vec![0.5, -0.25, 1.0];
        adam_step(&mut state, &mut w, &[0.0; 3]).unwrap();
        assert_eq!(w, vec![0.5, -0.25, 1.0]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_is_scale_invariant() {
        let run = |g: f64| {
            let mut state = AdamState::<f64>::new(cfg(1e-3, 0.0), 1);
            let mut w = vec![0.0f64];
            adam_step(&mut state, &mut w, &[g]).unwrap();
            w[0]
        };
        assert!((run(1.0) - run(10.0)).abs() < 1e-9);
    }

    #[test]
    fn decoupled_decay_shrinks_weights() {
        let mut state = AdamState::<f64>::new(cfg(1e-2, 0.1), 1);
        let mut w = vec![1.0f64];
        adam_step(&mut state, &mut w, &[0.0]).unwrap();
        assert!((w[0] - (1.0 - 1e-3)).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut state = AdamState::<f64>::new(cfg(1e-3, 0.0), 2);
        let mut w = vec![0.0f64];
        assert!(adam_step(&mut state, &mut w, &[0.0]).is_err());
    }
}
