//! Contrastive learning core: the InfoNCE loss family with exact gradients,
//! a toy MLP encoder, and the seeded training loop.

mod encoder;
mod loss;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use encoder::{DenseLayer, EncoderGrads, ForwardCache, ToyEncoder};
pub use loss::{
    infonce_batch, infonce_batch_rows, infonce_grad, infonce_loss, l2_normalize,
    l2_normalize_rows, max_row_norm_error,
};
pub use train::{augment, embed_observations, lr_at_step, train_contrastive, AdamW, TrainOutput};

/// Loss hyperparameters: softmax temperature and whether the batch loss
/// averages both query->key and key->query directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub temperature: f64,
    pub symmetrized: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { temperature: 0.2, symmetrized: true }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidInput(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Training hyperparameters. The default profile is desk scale; the
/// documented full-scale profile is available as
/// [`paper_profile`](Self::paper_profile).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub seed: u64,
    /// Hidden layer widths of the toy encoder.
    pub hidden_widths: Vec<usize>,
    /// Embedding dimension.
    pub embed_dim: usize,
    /// Gaussian noise scale for self-pair view augmentation.
    pub aug_noise_sigma: f64,
    /// Coordinate dropout probability for self-pair view augmentation.
    pub aug_dropout_p: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            base_lr: 1e-3,
            weight_decay: 1e-6,
            epochs: 50,
            warmup_epochs: 5,
            seed: 0,
            hidden_widths: vec![256, 128],
            embed_dim: 64,
            aug_noise_sigma: 0.1,
            aug_dropout_p: 0.2,
        }
    }
}

impl TrainConfig {
    /// The full-scale training profile: batch 1024, learning rate 6e-6,
    /// weight decay 1e-6, 300 epochs with a 40-epoch warmup.
    pub fn paper_profile() -> Self {
        Self {
            batch_size: 1024,
            base_lr: 6e-6,
            weight_decay: 1e-6,
            epochs: 300,
            warmup_epochs: 40,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidInput("batch_size must be >= 2".into()));
        }
        if self.warmup_epochs >= self.epochs {
            return Err(Error::InvalidInput(format!(
                "warmup_epochs {} must be < epochs {}",
                self.warmup_epochs, self.epochs
            )));
        }
        if !(self.base_lr > 0.0) {
            return Err(Error::InvalidInput("base_lr must be positive".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::InvalidInput("weight_decay must be non-negative".into()));
        }
        if self.embed_dim == 0 {
            return Err(Error::InvalidInput("embed_dim must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.aug_dropout_p) {
            return Err(Error::InvalidInput("aug_dropout_p must be in [0, 1)".into()));
        }
        Ok(())
    }
}
