use serde::{Deserialize, Serialize};

use crate::autograd::AdamConfig;
use crate::cad::DEFAULT_SEQ_LEN;

use super::ModelError;

/// Architecture of the autoencoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub seq_len: usize,
    /// Average only positions up to and including the first EOS.
    pub masked_pooling: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 256,
            layers: 4,
            heads: 4,
            d_ff: 512,
            dropout: 0.1,
            seq_len: DEFAULT_SEQ_LEN,
            masked_pooling: false,
        }
    }
}

impl ModelConfig {
    pub fn check(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.d_model == 0 || !self.d_model.is_multiple_of(16) {
            return bad(format!("d_model {} must be a positive multiple of 16", self.d_model));
        }
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return bad(format!("d_model {} not divisible by {} heads", self.d_model, self.heads));
        }
        if self.layers == 0 || self.d_ff == 0 || self.seq_len < 2 {
            return bad("layers, d_ff must be positive and seq_len at least 2".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0,1)", self.dropout));
        }
        Ok(())
    }
}

/// Optimization and loss weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub warmup_steps: u64,
    pub grad_clip: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight of the parameter cross-entropy.
    pub lambda: f64,
    /// Weight of the contrastive loss; 0 disables the contrastive branch.
    pub kappa: f64,
    pub tau: f64,
    /// Parameter accuracy tolerance in quantization bins.
    pub eta: i64,
    /// Dropout rate of the two latent masks.
    pub mask_dropout: f64,
    /// Stops after this many optimizer steps when set.
    pub max_steps: Option<u64>,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            warmup_steps: 2000,
            grad_clip: 1.0,
            epochs: 1000,
            batch_size: 1024,
            lambda: 2.0,
            kappa: 2.0,
            tau: 0.07,
            eta: 3,
            mask_dropout: 0.1,
            max_steps: None,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<(), ModelError> {
        let ok = self.lr > 0.0
            && self.grad_clip > 0.0
            && self.batch_size > 0
            && self.lambda >= 0.0
            && self.kappa >= 0.0
            && self.tau > 0.0
            && self.eta >= 0
            && (0.0..1.0).contains(&self.mask_dropout);
        if ok {
            Ok(())
        } else {
            Err(ModelError::Config(format!("invalid training config {self:?}")))
        }
    }
}
