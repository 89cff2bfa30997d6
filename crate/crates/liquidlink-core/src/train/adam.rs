//! Adam optimizer over the flat parameter vector.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Moment-decay hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> AdamParams {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config(format!(
                "adam betas must lie in [0, 1): got beta1={}, beta2={}",
                self.beta1, self.beta2
            )));
        }
        if !self.eps.is_finite() || self.eps <= 0.0 {
            return Err(Error::Config(format!(
                "adam eps must be a positive finite number, got {}",
                self.eps
            )));
        }
        Ok(())
    }
}

/// First and second moment estimates, one pair per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn zeros(n: usize) -> AdamState {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One Adam update with bias correction. `step` is the 1-based update count;
/// `params` and `state` are modified in place. Pure in the sense that the
/// result depends only on the arguments — no hidden state, no randomness.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    hyper: &AdamParams,
    learning_rate: f64,
    step: u64,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Config(format!(
            "adam shape mismatch: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if step == 0 {
        return Err(Error::Config("adam step count is 1-based".into()));
    }
    let bc1 = 1.0 - hyper.beta1.powi(step as i32);
    let bc2 = 1.0 - hyper.beta2.powi(step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
        state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= learning_rate * m_hat / (v_hat.sqrt() + hyper.eps);
        if !params[i].is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite parameter at coordinate {i} after adam step {step}"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_parameters_and_fresh_moments_untouched() {
        let mut params = vec![0.3, -1.7, 42.0];
        let snapshot = params.clone();
        let mut state = AdamState::zeros(3);
        let grads = vec![0.0; 3];
        adam_step(
            &mut params,
            &grads,
            &mut state,
            &AdamParams::default(),
            0.02,
            1,
        )
        .unwrap();
        assert_eq!(params, snapshot, "zero gradient is a fixed point");
        assert!(state.m.iter().all(|&m| m == 0.0));
        assert!(state.v.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_gradients_decay_existing_moments_geometrically() {
        let mut params = vec![1.0];
        let mut state = AdamState {
            m: vec![1.0],
            v: vec![1.0],
        };
        let grads = vec![0.0];
        adam_step(
            &mut params,
            &grads,
            &mut state,
            &AdamParams::default(),
            0.02,
            5,
        )
        .unwrap();
        assert!((state.m[0] - 0.9).abs() < 1e-15);
        assert!((state.v[0] - 0.999).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_each_coordinate_by_lr_times_gradient_sign() {
        let lr = 0.02;
        let mut params = vec![0.0, 1.0, -2.0, 7.5];
        let grads = vec![0.5, -3.0, 1e-3, -0.01];
        let mut state = AdamState::zeros(4);
        adam_step(
            &mut params,
            &grads,
            &mut state,
            &AdamParams::default(),
            lr,
            1,
        )
        .unwrap();
        let expected = [-lr, lr + 1.0, -lr - 2.0, lr + 7.5];
        for (i, (&got, &want)) in params.iter().zip(&expected).enumerate() {
            assert!(
                (got - want).abs() < lr * 1e-4,
                "coordinate {i}: got {got}, expected ≈ {want}"
            );
        }
    }

    #[test]
    fn bias_correction_matches_hand_computed_second_step() {
        // Two steps with constant gradient g: after bias correction m̂ = g and
        // v̂ = g² at every step, so each update is exactly −lr·g/(|g| + eps).
        let h = AdamParams::default();
        let lr = 0.1;
        let g = 0.25;
        let mut params = vec![0.0];
        let mut state = AdamState::zeros(1);
        adam_step(&mut params, &[g], &mut state, &h, lr, 1).unwrap();
        adam_step(&mut params, &[g], &mut state, &h, lr, 2).unwrap();
        let per_step = lr * g / (g + h.eps);
        assert!((params[0] + 2.0 * per_step).abs() < 1e-12);
    }

    #[test]
    fn updates_are_deterministic() {
        let run = || {
            let mut params = vec![0.1, 0.2];
            let mut state = AdamState::zeros(2);
            for step in 1..=10u64 {
                let grads = vec![0.3 * step as f64, -0.1];
                adam_step(
                    &mut params,
                    &grads,
                    &mut state,
                    &AdamParams::default(),
                    0.02,
                    step,
                )
                .unwrap();
            }
            params
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
    }

    #[test]
    fn shape_mismatch_and_zero_step_are_rejected() {
        let mut params = vec![0.0; 2];
        let mut state = AdamState::zeros(2);
        let err = adam_step(
            &mut params,
            &[1.0],
            &mut state,
            &AdamParams::default(),
            0.02,
            1,
        )
        .unwrap_err();
        assert!(matches!(err, crate::Error::Config(_)));
        let err = adam_step(
            &mut params,
            &[1.0, 1.0],
            &mut state,
            &AdamParams::default(),
            0.02,
            0,
        )
        .unwrap_err();
        assert!(matches!(err, crate::Error::Config(_)));
    }
}
