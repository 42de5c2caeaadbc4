//! Minimal dense-network engine: MLP forward/backward, Adam, and the policy
//! heads used by the decision hierarchy. Everything is `f64` and strictly
//! sequential so training trajectories replay bit-identically.

pub mod adam;
pub mod heads;
pub mod mlp;

pub use adam::{adam_update, adam_update_vec, clip_grad_norm, AdamParams, AdamState};
pub use heads::{
    categorical_entropy, categorical_log_probs, categorical_sample, gaussian_log_prob,
    gaussian_sample, log_softmax, softmax, tanh_squash_correction,
};
pub use mlp::{ForwardCache, Mlp, MlpGrads};
