//! Tensors, a reverse-mode tape, parameter stores and the Adam optimizer.

pub mod gradcheck;
pub mod graph;
pub mod optim;
pub mod params;
pub mod tensor;

pub use gradcheck::{check_gradients, check_gradients_sampled, GradCheck};
pub use graph::{AttnDims, Gradients, Graph, Var};
pub use optim::{clip_global_norm, global_norm, warmup_factor, Adam, AdamConfig};
pub use params::{Bound, ParamId, ParamStore};
pub use tensor::Tensor;
