use std::f64::consts::PI;

use super::{
    Dynamics, Environment, EnvironmentSpec, Integrator, DEFAULT_DT, DEFAULT_GAMMA,
    DEFAULT_MAX_EPISODE_STEPS,
};
use crate::error::Result;

/// Damped pendulum, `θ = 0` upright:
/// `θ̈ = (g/l)·sin θ − b·θ̇ + k·u`.
///
/// Reward rate `−(wrap(θ)² + 0.1·θ̇² + 0.001·u²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Pendulum {
    pub gravity_over_length: f64,
    pub damping: f64,
    pub torque_gain: f64,
    pub max_torque: f64,
}

impl Default for Pendulum {
    fn default() -> Self {
        // Damping keeps explicit Euler from pumping energy into the swing at
        // dt = 0.05.
        Pendulum {
            gravity_over_length: 10.0,
            damping: 1.0,
            torque_gain: 3.0,
            max_torque: 2.0,
        }
    }
}

/// Angle wrapped into `[−π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

impl Pendulum {
    pub(super) fn f(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let (theta, omega) = (x[0], x[1]);
        vec![
            omega,
            self.gravity_over_length * theta.sin() - self.damping * omega + self.torque_gain * u[0],
        ]
    }

    pub(super) fn reward_rate(&self, x: &[f64], u: &[f64]) -> f64 {
        let th = wrap_angle(x[0]);
        -(th * th + 0.1 * x[1] * x[1] + 0.001 * u[0] * u[0])
    }

    pub fn into_environment(self) -> Result<Environment> {
        let spec = EnvironmentSpec {
            name: "pendulum".into(),
            state_dim: 2,
            action_dim: 1,
            action_low: vec![-self.max_torque],
            action_high: vec![self.max_torque],
            dt: DEFAULT_DT,
            gamma: DEFAULT_GAMMA,
            max_episode_steps: DEFAULT_MAX_EPISODE_STEPS,
            integrator: Integrator::ExplicitEuler,
            reward_dt_scaled: true,
        };
        Environment::new(spec, Dynamics::Pendulum(self), PI)
    }
}
