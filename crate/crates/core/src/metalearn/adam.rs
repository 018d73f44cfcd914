use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moment estimates. No weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One bias-corrected step in place. Coordinates whose gradient has been
    /// zero since `t = 0` stay bitwise unchanged.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::shape(
                "adam",
                format!(
                    "state {} vs params {} vs grad {}",
                    self.m.len(),
                    params.len(),
                    grad.len()
                ),
            ));
        }
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powf(self.t as f64);
        let c2 = 1.0 - ADAM_BETA2.powf(self.t as f64);
        for i in 0..params.len() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grad[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_update(
    state: &AdamState,
    params: &[f64],
    grad: &[f64],
    lr: f64,
) -> Result<(Vec<f64>, AdamState)> {
    let mut state = state.clone();
    let mut params = params.to_vec();
    state.step(&mut params, grad, lr)?;
    Ok((params, state))
}
