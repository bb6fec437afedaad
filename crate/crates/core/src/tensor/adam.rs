use serde::{Deserialize, Serialize};

/// Hyperparameters of the bias-corrected adaptive-moment update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for one flat parameter vector.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update in place. `params` and `grads` must have the
    /// length this state was created with.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], cfg: &AdamConfig) {
        assert_eq!(params.len(), self.m.len(), "adam: parameter length changed");
        assert_eq!(grads.len(), self.m.len(), "adam: gradient length mismatch");
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}
