//! Transformer autoencoder with a dropout-contrastive projection branch.

pub mod checkpoint;
pub mod config;
pub mod fit;
pub mod layers;
pub mod loss;
pub mod model;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, ManifestEntry};
pub use config::{ModelConfig, TrainConfig};
pub use fit::{epoch_log_csv, epoch_log_row, reconstruction_accuracy, EpochStats};
pub use layers::Mode;
pub use loss::{contrastive_loss, cosine_similarity, project_and_mask, reconstruction_loss, total_loss, RecTargets};
pub use model::{logits_to_tokens, truncate_at_eos, CadModel, Decoded, Encoded};
pub use train::{StepStats, TrainState};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("token out of range in item {item}, row {row}")]
    IndexOutOfRange { item: usize, row: usize },
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("empty batch")]
    EmptyBatch,
}
