//! CAD construction sequences: grammar and quantized matrix encoding, a voxel
//! CSG kernel, Random Replace and Extrude augmentation, a transformer
//! autoencoder trained with reconstruction and dropout-contrastive losses, a
//! latent GAN for generation, and the evaluation metrics around them.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the concrete instantiations.

pub mod autograd;
pub mod cad;
pub mod config;
pub mod eval;
pub mod gan;
pub mod nn;
pub mod rre;
pub mod geometry;
pub mod metrics;
pub mod scalar;
pub mod synth;

pub use scalar::Scalar;

pub type CadModel32 = nn::CadModel<f32>;
pub type CadModel64 = nn::CadModel<f64>;
pub type TrainState32 = nn::TrainState<f32>;
pub type TrainState64 = nn::TrainState<f64>;
pub type LatentGan32 = gan::LatentGan<f32>;
pub type LatentGan64 = gan::LatentGan<f64>;
pub type Graph32 = autograd::Graph<f32>;
pub type Graph64 = autograd::Graph<f64>;
