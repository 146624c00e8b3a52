//! Deterministic continuous-control environments `ẋ = f(x, u)` integrated with a
//! fixed step, plus the discounted Riccati oracle for the linear-quadratic one.

mod lqr;
mod pendulum;
mod point_mass;
pub mod riccati;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use lqr::{LqrEnv, LqrProblem};
pub use pendulum::Pendulum;
pub use point_mass::PointMass;
pub use riccati::{
    care_residual, hjb_residual, lqr_optimal_control, lqr_optimal_value, solve_discounted_care,
    supremand, verify_oracle, OracleReport,
};

pub const DEFAULT_DT: f64 = 0.05;
pub const DEFAULT_GAMMA: f64 = 0.99;
pub const DEFAULT_MAX_EPISODE_STEPS: usize = 200;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// `x' = x + dt·f(x, u)`
    #[default]
    ExplicitEuler,
    /// Velocities first, then positions from the updated velocities.
    SemiImplicitEuler,
}

/// Static description of an environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    /// Integration step in seconds.
    pub dt: f64,
    /// Per-step discount factor.
    pub gamma: f64,
    pub max_episode_steps: usize,
    pub integrator: Integrator,
    /// Per-step rewards are the reward rate multiplied by `dt`.
    pub reward_dt_scaled: bool,
}

impl EnvironmentSpec {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            errs.push(format!("dt must be positive and finite, got {}", self.dt));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            errs.push(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if self.max_episode_steps == 0 {
            errs.push("max_episode_steps must be at least 1".into());
        }
        if self.action_low.len() != self.action_dim || self.action_high.len() != self.action_dim {
            errs.push("action bounds must have action_dim entries".into());
        } else if self
            .action_low
            .iter()
            .zip(&self.action_high)
            .any(|(lo, hi)| !(lo < hi))
        {
            errs.push("action_low must be strictly below action_high".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errs))
        }
    }

    /// Discount per unit of time, `γ^(1/dt)`.
    pub fn continuous_gamma(&self) -> f64 {
        (self.gamma.ln() / self.dt).exp()
    }

    /// Per-step reward converted back to a rate.
    pub fn reward_rate(&self, step_reward: f64) -> f64 {
        if self.reward_dt_scaled {
            step_reward / self.dt
        } else {
            step_reward
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Dynamics {
    Lqr(LqrEnv),
    Pendulum(Pendulum),
    PointMass(PointMass),
}

impl Dynamics {
    fn f(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        match self {
            Dynamics::Lqr(e) => e.f(x, u),
            Dynamics::Pendulum(e) => e.f(x, u),
            Dynamics::PointMass(e) => e.f(x, u),
        }
    }

    fn reward_rate(&self, x: &[f64], u: &[f64]) -> f64 {
        match self {
            Dynamics::Lqr(e) => e.reward_rate(x, u),
            Dynamics::Pendulum(e) => e.reward_rate(x, u),
            Dynamics::PointMass(e) => e.reward_rate(x, u),
        }
    }

    /// `(position, velocity)` index pairs with `ṗ = v`.
    fn position_velocity(&self) -> &[(usize, usize)] {
        match self {
            Dynamics::Lqr(e) => e.position_velocity(),
            Dynamics::Pendulum(_) => &[(0, 1)],
            Dynamics::PointMass(_) => &[(0, 2), (1, 3)],
        }
    }

    fn reset<R: Rng + ?Sized>(&self, rng: &mut R, radius: f64) -> Vec<f64> {
        match self {
            Dynamics::Lqr(e) => uniform_box(rng, e.problem.state_dim(), radius),
            Dynamics::Pendulum(_) => {
                let theta = rng.random_range(-std::f64::consts::PI..=std::f64::consts::PI);
                let omega = rng.random_range(-1.0..=1.0);
                vec![theta, omega]
            }
            Dynamics::PointMass(_) => {
                let mut x = uniform_box(rng, 2, radius);
                x.extend(uniform_box(rng, 2, 0.5 * radius));
                x
            }
        }
    }

    fn terminal(&self, _x: &[f64]) -> bool {
        false
    }
}

fn uniform_box<R: Rng + ?Sized>(rng: &mut R, n: usize, radius: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if radius > 0.0 {
                rng.random_range(-radius..=radius)
            } else {
                0.0
            }
        })
        .collect()
}

/// An environment instance. The only mutable state is the number of steps
/// taken in the current episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    spec: EnvironmentSpec,
    dynamics: Dynamics,
    init_radius: f64,
    elapsed: usize,
}

/// Names accepted by [`Environment::by_name`].
pub const ENVIRONMENT_NAMES: [&str; 3] = ["lqr", "pendulum", "point_mass"];

impl Environment {
    pub fn new(spec: EnvironmentSpec, dynamics: Dynamics, init_radius: f64) -> Result<Self> {
        spec.validate()?;
        if !(init_radius >= 0.0 && init_radius.is_finite()) {
            return Err(Error::InvalidConfig(vec![format!(
                "init_radius must be non-negative and finite, got {init_radius}"
            )]));
        }
        Ok(Environment {
            spec,
            dynamics,
            init_radius,
            elapsed: 0,
        })
    }

    /// One of [`ENVIRONMENT_NAMES`] with default parameters.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "lqr" => LqrEnv::double_integrator().into_environment(),
            "pendulum" => Pendulum::default().into_environment(),
            "point_mass" => PointMass::default().into_environment(),
            other => Err(Error::InvalidConfig(vec![format!(
                "unknown environment `{other}` (expected one of {})",
                ENVIRONMENT_NAMES.join(", ")
            )])),
        }
    }

    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    pub fn spec_mut(&mut self) -> &mut EnvironmentSpec {
        &mut self.spec
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn init_radius(&self) -> f64 {
        self.init_radius
    }

    pub fn set_init_radius(&mut self, r: f64) {
        self.init_radius = r;
    }

    pub fn elapsed(&self) -> usize {
        self.elapsed
    }

    pub fn set_elapsed(&mut self, elapsed: usize) {
        self.elapsed = elapsed;
    }

    /// The LQR problem behind this environment, if it is linear-quadratic.
    pub fn lqr(&self) -> Option<&LqrProblem> {
        match &self.dynamics {
            Dynamics::Lqr(e) => Some(&e.problem),
            _ => None,
        }
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        self.elapsed = 0;
        self.dynamics.reset(rng, self.init_radius)
    }

    pub fn clip_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.spec.action_low.iter().zip(&self.spec.action_high))
            .map(|(&a, (&lo, &hi))| a.clamp(lo, hi))
            .collect()
    }

    fn check(&self, state: &[f64], action: &[f64]) -> Result<()> {
        if state.len() != self.spec.state_dim {
            return Err(Error::DimensionMismatch {
                what: "environment state",
                expected: self.spec.state_dim,
                got: state.len(),
            });
        }
        if action.len() != self.spec.action_dim {
            return Err(Error::DimensionMismatch {
                what: "environment action",
                expected: self.spec.action_dim,
                got: action.len(),
            });
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("state {state:?}")));
        }
        if action.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("action {action:?}")));
        }
        Ok(())
    }

    /// Exact `f(x, u)` with the action clipped to bounds. Test oracles only.
    pub fn true_dynamics(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        self.check(state, action)?;
        Ok(self.dynamics.f(state, &self.clip_action(action)))
    }

    /// Instantaneous reward rate `R(x, u)` with the action clipped to bounds.
    pub fn reward_rate(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        self.check(state, action)?;
        Ok(self.dynamics.reward_rate(state, &self.clip_action(action)))
    }

    /// Integrate one step without touching the episode counter.
    pub fn transition(&self, state: &[f64], action: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check(state, action)?;
        let u = self.clip_action(action);
        let dt = self.spec.dt;
        let fx = self.dynamics.f(state, &u);
        let mut next: Vec<f64> = state.iter().zip(&fx).map(|(x, d)| x + dt * d).collect();
        if self.spec.integrator == Integrator::SemiImplicitEuler {
            for &(p, v) in self.dynamics.position_velocity() {
                next[p] = state[p] + dt * next[v];
            }
        }
        let rate = self.dynamics.reward_rate(state, &u);
        let reward = if self.spec.reward_dt_scaled { rate * dt } else { rate };
        if next.iter().any(|v| !v.is_finite()) || !reward.is_finite() {
            return Err(Error::NonFinite(format!(
                "transition from {state:?} under {u:?}"
            )));
        }
        Ok((next, reward))
    }

    pub fn step(&mut self, state: &[f64], action: &[f64]) -> Result<StepResult> {
        let (next_state, reward) = self.transition(state, action)?;
        self.elapsed += 1;
        let done = self.dynamics.terminal(&next_state);
        let truncated = !done && self.elapsed >= self.spec.max_episode_steps;
        Ok(StepResult {
            next_state,
            reward,
            done,
            truncated,
        })
    }
}
