//! Clipped policy surrogate, Bellman value loss, HJB residual loss and the
//! combined value objective.

mod ppo;
mod value;

use serde::{Deserialize, Serialize};

pub use ppo::{ppo_clip_objective, ClipObjective};
pub use value::{
    bellman_errors, bellman_value_loss, combined_value_loss, hjb_loss, hjb_residuals,
    record_hjb_residual, record_value_objective, value_objective_and_gradient, value_objective_on,
    BellmanTarget, HjbInput, HjbResidualBatch, HjbTerm, InputGradMode, RecordedObjective,
    ValueObjective, ValueObjectiveOptions, ValueSample,
};

/// Losses of one training iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub policy_surrogate: f64,
    pub mse_u: f64,
    pub mse_f: f64,
    /// `0.5·mse_u + lambda_hjb·mse_f`
    pub combined_value_loss: f64,
    pub clip_fraction: f64,
    /// HJB weight actually applied, after the overflow guard.
    pub lambda_hjb: f64,
}

impl LossReport {
    pub fn new(policy_surrogate: f64, mse_u: f64, mse_f: f64, lambda_hjb: f64, clip_fraction: f64) -> Self {
        LossReport {
            policy_surrogate,
            mse_u,
            mse_f,
            combined_value_loss: combined_value_loss(mse_u, mse_f, lambda_hjb),
            clip_fraction,
            lambda_hjb,
        }
    }
}
