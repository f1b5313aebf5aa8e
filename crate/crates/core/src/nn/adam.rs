//! Adam with bias correction over a flat parameter vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyperParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyperParams {
    fn default() -> Self {
        AdamHyperParams {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-6,
        }
    }
}

/// First/second moment estimates plus the step counter, one slot per
/// parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> AdamState {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    /// One update: t += 1; m, v exponential moving averages; parameters move
    /// by -lr * m_hat / (sqrt(v_hat) + eps).
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], hp: &AdamHyperParams) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::contract(format!(
                "adam_step shape mismatch: state {}, params {}, grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - hp.beta1.powi(self.t as i32);
        let bc2 = 1.0 - hp.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = hp.beta1 * self.m[i] + (1.0 - hp.beta1) * g;
            self.v[i] = hp.beta2 * self.v[i] + (1.0 - hp.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= hp.learning_rate * m_hat / (v_hat.sqrt() + hp.epsilon);
            if !params[i].is_finite() {
                return Err(Error::numeric(
                    "adam_step",
                    format!("parameter {i} became {} (grad {g})", params[i]),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_fresh_params_unchanged() {
        let mut params = vec![0.5, -0.25, 3.0];
        let mut state = AdamState::new(3);
        state.step(&mut params, &[0.0; 3], &AdamHyperParams::default()).unwrap();
        assert_eq!(params, vec![0.5, -0.25, 3.0]);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With g = 1 the bias-corrected m_hat and v_hat are both exactly 1,
        // so the first update is -lr / (1 + eps).
        let hp = AdamHyperParams::default();
        let mut params = vec![0.0];
        let mut state = AdamState::new(1);
        state.step(&mut params, &[1.0], &hp).unwrap();
        let expected = -hp.learning_rate / (1.0 + hp.epsilon);
        assert!((params[0] - expected).abs() < 1e-18, "step {}", params[0]);
    }

    #[test]
    fn descends_a_quadratic() {
        // f(w) = w^2 from w = 1; |w| should shrink across step windows.
        let hp = AdamHyperParams {
            learning_rate: 1e-2,
            ..AdamHyperParams::default()
        };
        let mut w = vec![1.0];
        let mut state = AdamState::new(1);
        let mut checkpoints = Vec::new();
        for step in 0..100 {
            if step % 10 == 0 {
                checkpoints.push(w[0].abs());
            }
            let grad = [2.0 * w[0]];
            state.step(&mut w, &grad, &hp).unwrap();
        }
        checkpoints.push(w[0].abs());
        assert!(
            checkpoints.windows(2).all(|c| c[1] < c[0]),
            "|w| not strictly decreasing over 10-step windows: {checkpoints:?}"
        );
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut state = AdamState::new(2);
        let mut params = vec![0.0; 3];
        assert!(state.step(&mut params, &[0.0; 3], &AdamHyperParams::default()).is_err());
    }
}
