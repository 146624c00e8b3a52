use super::{
    Dynamics, Environment, EnvironmentSpec, Integrator, DEFAULT_DT, DEFAULT_GAMMA,
    DEFAULT_MAX_EPISODE_STEPS,
};
use crate::error::Result;

/// Planar point mass with linear drag, state `[px, py, vx, vy]`:
/// `ṗ = v`, `v̇ = u − c·v`.
///
/// Reward rate `−(‖p‖² + 0.1‖v‖² + 0.01‖u‖²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointMass {
    pub drag: f64,
    pub max_force: f64,
}

impl Default for PointMass {
    fn default() -> Self {
        PointMass {
            drag: 0.5,
            max_force: 1.0,
        }
    }
}

impl PointMass {
    pub(super) fn f(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        vec![
            x[2],
            x[3],
            u[0] - self.drag * x[2],
            u[1] - self.drag * x[3],
        ]
    }

    pub(super) fn reward_rate(&self, x: &[f64], u: &[f64]) -> f64 {
        let p2 = x[0] * x[0] + x[1] * x[1];
        let v2 = x[2] * x[2] + x[3] * x[3];
        let u2 = u[0] * u[0] + u[1] * u[1];
        -(p2 + 0.1 * v2 + 0.01 * u2)
    }

    pub fn into_environment(self) -> Result<Environment> {
        let spec = EnvironmentSpec {
            name: "point_mass".into(),
            state_dim: 4,
            action_dim: 2,
            action_low: vec![-self.max_force; 2],
            action_high: vec![self.max_force; 2],
            dt: DEFAULT_DT,
            gamma: DEFAULT_GAMMA,
            max_episode_steps: DEFAULT_MAX_EPISODE_STEPS,
            integrator: Integrator::ExplicitEuler,
            reward_dt_scaled: true,
        };
        Environment::new(spec, Dynamics::PointMass(self), 1.0)
    }
}
