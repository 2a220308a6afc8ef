use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    /// Keras defaults.
    fn default() -> Self {
        AdamParams {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

/// Bias-corrected Adam moments for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub hyper: AdamParams,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize, hyper: AdamParams) -> Result<Self> {
        if !(hyper.learning_rate > 0.0)
            || !(0.0..1.0).contains(&hyper.beta1)
            || !(0.0..1.0).contains(&hyper.beta2)
            || !(hyper.epsilon > 0.0)
        {
            return Err(Error::InvalidArgument(format!("invalid Adam hyperparameters {hyper:?}")));
        }
        Ok(AdamState {
            hyper,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        })
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "Adam state has {} slots, got {} params and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let AdamParams {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.hyper;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for k in 0..params.len() {
            let g = grads[k];
            self.m[k] = beta1 * self.m[k] + (1.0 - beta1) * g;
            self.v[k] = beta2 * self.v[k] + (1.0 - beta2) * g * g;
            let m_hat = self.m[k] / bc1;
            let v_hat = self.v[k] / bc2;
            params[k] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}
