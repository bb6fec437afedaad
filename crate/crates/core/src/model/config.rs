use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{SEGMENT_LEN, SPECTRUM_LEN};

/// Architecture and loss settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub d_model: usize,
    /// Samples per FHR token (and spectrum bins per FFT token).
    pub token_patch: usize,
    pub kl_target_per_dim: f64,
    pub tc_target: f64,
    pub focal_gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            d_model: 32,
            token_patch: 8,
            kl_target_per_dim: 0.5,
            tc_target: 200.0,
            focal_gamma: 2.0,
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.latent_dim < 2 {
            return bad("latent_dim must be at least 2");
        }
        if self.d_model == 0 {
            return bad("d_model must be positive");
        }
        if self.token_patch == 0 || SEGMENT_LEN % self.token_patch != 0 {
            return bad("token_patch must divide 1200");
        }
        if self.batch_size < 2 || self.batch_size % 2 != 0 {
            return bad("batch_size must be even and at least 2");
        }
        if !(self.focal_gamma >= 0.0) {
            return bad("focal_gamma must be non-negative");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.kl_target_per_dim > 0.0 && self.tc_target > 0.0) {
            return bad("KL and TC targets must be positive");
        }
        Ok(())
    }

    /// FHR tokens per segment.
    pub fn fhr_tokens(&self) -> usize {
        SEGMENT_LEN / self.token_patch
    }

    /// FFT tokens per segment; the spectrum is zero-padded to a whole
    /// number of patches.
    pub fn fft_tokens(&self) -> usize {
        SPECTRUM_LEN.div_ceil(self.token_patch)
    }

    pub fn ffn_hidden(&self) -> usize {
        2 * self.d_model
    }
}

/// Arithmetic used for the training forward/backward passes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

/// Optimisation, early stopping and coefficient control.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    /// Epochs before early stopping may trigger.
    pub min_epochs: usize,
    pub beta_init: f64,
    pub lambda_init: f64,
    pub controller_gain: f64,
    pub beta_bounds: (f64, f64),
    pub lambda_bounds: (f64, f64),
    pub precision: Precision,
    /// Pins both coefficients at their initial values.
    pub freeze_coefficients: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            patience: 10,
            min_epochs: 0,
            beta_init: 1.0,
            lambda_init: 1.0,
            controller_gain: 0.05,
            beta_bounds: (1e-4, 10.0),
            lambda_bounds: (0.0, 10.0),
            precision: Precision::F32,
            freeze_coefficients: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive");
        }
        let (blo, bhi) = self.beta_bounds;
        let (llo, lhi) = self.lambda_bounds;
        if !(0.0 < blo && blo <= bhi) || !(0.0 <= llo && llo <= lhi) {
            return bad("coefficient bounds must be ordered and non-negative (beta strictly positive)");
        }
        if !(self.beta_init >= 0.0 && self.lambda_init >= 0.0 && self.controller_gain >= 0.0) {
            return bad("coefficients and controller gain must be non-negative");
        }
        Ok(())
    }
}
