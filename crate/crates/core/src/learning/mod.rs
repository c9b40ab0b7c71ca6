//! Entropy-derived supervision, ranking objectives and the optimizer.

mod entropy;
mod loss;
mod optim;

pub use entropy::{confidence, predictive_entropy, shannon_entropy, ConfidenceVector, EntropyVector};
pub use loss::{
    listmle_loss, listmle_loss_grad, mse_loss, mse_loss_grad, ranking_loss, ranking_loss_grad, softplus,
    step_objective, total_loss, trajectory_objective, triplet_loss, triplet_loss_grad, LossKind,
    DEFAULT_TRIPLET_MARGIN,
};
pub use optim::{adamw_step, clip_gradients, global_norm, AdamWConfig, OptimizerState};
