//! Minimal dense numeric engine.
//!
//! Everything is `f64` and row-major. Weights are stored `[fan_in, fan_out]`
//! so a batch forward pass is a single `X · W + b`.

mod adam;
mod dense;
mod linalg;
mod loss;
mod params;
mod tensor;

pub use adam::{adam_step, AdamConfig, OptimState};
pub use dense::{backward, dense_backward, dense_forward, forward, Activation, ForwardCache};
pub use loss::{
    ce_loss, kld_loss, kld_with_grad, mse_loss, mse_with_grad, softmax, softmax_cross_entropy,
};
pub use params::{Layer, ModelParams};
pub use tensor::Tensor;
