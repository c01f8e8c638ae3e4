//! Minimal dense feed-forward network engine: forward pass, reverse-mode
//! gradients, Adam updates, and the loss functions the trainers build on.
//!
//! Everything here is generic over [`Scalar`] (`f32` or `f64`) and pure:
//! identical arguments give bit-identical results, so values can be shared
//! read-only across threads.

mod adam;
mod loss;
mod matrix;
mod mlp;
mod scalar;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use loss::{mse_loss, penalty_loss, LossReport};
pub use matrix::Matrix;
pub use mlp::{mlp_forward, mlp_gradient, MlpGradients, MlpParams};
pub use scalar::Scalar;
