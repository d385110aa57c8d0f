//! Minimal neural toolkit: dense layers, ReLU, batch norm, reverse-mode
//! gradients, ADAM and the regularised MSE loss.

pub mod adam;
pub mod checkpoint;
pub mod loss;
pub mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, NamedTensor};
pub use loss::{loss_mse_l2, LossOutput};
pub use mlp::{accumulate_grads, BatchNormState, Dense, Mlp, MlpParams, MlpSpec, MlpTape, Mode};
