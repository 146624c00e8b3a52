//! PPO-Clip with an optional Hamilton–Jacobi–Bellman residual term on the
//! value loss.
//!
//! The value network is trained as a physics-informed approximator: its exact
//! input-gradient `∇ₓV` enters the residual `V·ln γ + R + ∇ₓVᵀ·f̂`, and the
//! parameter gradient of that residual is obtained from a scalar tape that
//! records input tangents as ordinary nodes.

pub mod autodiff;
pub mod config;
pub mod environments;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod networks;
pub mod rollout;
pub mod trainer;

pub use error::{Error, Result};
