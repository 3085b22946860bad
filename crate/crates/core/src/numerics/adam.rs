//! Adam optimizer with bias correction.

use serde::{Deserialize, Serialize};

use super::matrix::all_finite;
use crate::{Error, Result};

/// Per-parameter-group optimizer state. Accumulator shapes mirror the flat
/// parameter vector they update; `t` increments by exactly one per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update in place. A step with an all-zero gradient advances the
/// accumulators and the counter but leaves the parameters untouched.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if lr <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Shape(format!(
            "adam_step: params {}, grads {}, state {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if !all_finite(grads) {
        return Err(Error::NonFinite("adam_step gradients".into()));
    }
    state.t += 1;
    let bc1 = 1.0 - state.beta1.powi(state.t as i32);
    let bc2 = 1.0 - state.beta2.powi(state.t as i32);
    let zero_grad = grads.iter().all(|g| *g == 0.0);
    for i in 0..params.len() {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        if !zero_grad {
            let m_hat = state.m[i] / bc1;
            let v_hat = state.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = vec![0.5, -1.25];
        let mut state = AdamState::new(2);
        adam_step(&mut params, &[0.0, 0.0], &mut state, 0.1).unwrap();
        assert_eq!(params, vec![0.5, -1.25]);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn zero_gradient_with_stale_momentum_leaves_params_unchanged() {
        let mut params = vec![1.0];
        let mut state = AdamState::new(1);
        adam_step(&mut params, &[0.7], &mut state, 0.1).unwrap();
        let after_first = params[0];
        adam_step(&mut params, &[0.0], &mut state, 0.1).unwrap();
        assert_eq!(params[0], after_first);
        assert_eq!(state.t, 2);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // Bias correction makes m_hat = v_hat = 1 on the first step, so the
        // update is lr / (1 + eps).
        let mut params = vec![0.0];
        let mut state = AdamState::new(1);
        adam_step(&mut params, &[1.0], &mut state, 0.1).unwrap();
        assert!((params[0] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn two_identical_steps_match_hand_recurrence() {
        let (beta1, beta2, eps, lr, g) = (0.9, 0.999, 1e-8, 0.1, 1.0);
        // Independent recurrence evaluated directly.
        let mut expected = 0.0_f64;
        let mut m = 0.0_f64;
        let mut v = 0.0_f64;
        for t in 1..=2i32 {
            m = beta1 * m + (1.0 - beta1) * g;
            v = beta2 * v + (1.0 - beta2) * g * g;
            let m_hat = m / (1.0 - beta1.powi(t));
            let v_hat = v / (1.0 - beta2.powi(t));
            expected -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        let mut params = vec![0.0];
        let mut state = AdamState::new(1);
        adam_step(&mut params, &[g], &mut state, lr).unwrap();
        adam_step(&mut params, &[g], &mut state, lr).unwrap();
        assert!((params[0] - expected).abs() < 1e-12);
        assert!((params[0] + 0.2).abs() < 1e-7);
    }

    #[test]
    fn rejects_nonpositive_lr() {
        let mut params = vec![0.0];
        let mut state = AdamState::new(1);
        assert!(adam_step(&mut params, &[1.0], &mut state, 0.0).is_err());
        assert!(adam_step(&mut params, &[1.0], &mut state, -0.1).is_err());
    }

    #[test]
    fn rejects_shape_mismatch_and_nonfinite() {
        let mut params = vec![0.0, 0.0];
        let mut state = AdamState::new(2);
        assert!(adam_step(&mut params, &[1.0], &mut state, 0.1).is_err());
        assert!(adam_step(&mut params, &[f64::NAN, 0.0], &mut state, 0.1).is_err());
    }
}
