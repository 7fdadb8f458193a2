//! Minimal differentiable kernel: tanh MLPs with exact reverse-mode
//! gradients, categorical heads, Adam, checkpoints and a finite-difference
//! gradient verifier.

mod adam;
mod categorical;
mod checkpoint;
pub mod gradcheck;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use categorical::{categorical, kl_categorical, softmax, Categorical, CategoricalSample, PROB_FLOOR};
pub use checkpoint::Checkpoint;
pub use mlp::{ForwardCache, Mlp};
