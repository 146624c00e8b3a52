//! On-policy trajectory collection and advantage estimation.

mod gae;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environments::Environment;
use crate::error::{Error, Result};
use crate::networks::{GaussianPolicy, ValueNetwork};

pub use gae::{compute_gae, gae_from_residuals, normalize_advantages, td_residuals, AdvantageEstimate};

/// One iteration's transitions. `next_states[t]` is always the true successor
/// of `states[t]`; after a boundary `states[t + 1]` is a fresh reset state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutBuffer {
    pub dt: f64,
    pub states: Vec<Vec<f64>>,
    /// Sampled actions before clipping, as scored by the policy.
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<Vec<f64>>,
    pub dones: Vec<bool>,
    pub truncateds: Vec<bool>,
    pub log_probs_old: Vec<f64>,
    /// `V(s_t)` under the collection-time parameters.
    pub values_old: Vec<f64>,
    /// `V(s_{t+1})` under the collection-time parameters.
    pub next_values_old: Vec<f64>,
    /// `(s_{t+1} − s_t)/dt`
    pub dynamics_estimates: Vec<Vec<f64>>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Step `t` ends an episode, so it is excluded from the HJB residual.
    pub fn is_boundary(&self, t: usize) -> bool {
        self.dones[t] || self.truncateds[t]
    }

    fn push(&mut self, tr: &Transition, log_prob: f64, value: f64, next_value: f64) {
        self.dynamics_estimates.push(finite_difference(&tr.state, &tr.next_state, self.dt));
        self.states.push(tr.state.clone());
        self.actions.push(tr.action.clone());
        self.rewards.push(tr.reward);
        self.next_states.push(tr.next_state.clone());
        self.dones.push(tr.done);
        self.truncateds.push(tr.truncated);
        self.log_probs_old.push(log_prob);
        self.values_old.push(value);
        self.next_values_old.push(next_value);
    }
}

pub fn finite_difference(state: &[f64], next_state: &[f64], dt: f64) -> Vec<f64> {
    state
        .iter()
        .zip(next_state)
        .map(|(x, y)| (y - x) / dt)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    pub truncated: bool,
}

/// Every transition of one episode, which may span several iterations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub index: u64,
    /// Global step count at which the episode ended.
    pub end_timestep: u64,
    pub transitions: Vec<Transition>,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }
}

/// Serializable collector state for checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectorState {
    pub state: Option<Vec<f64>>,
    pub elapsed: usize,
    pub trace: EpisodeTrace,
    pub episodes_completed: u64,
    pub timesteps: u64,
}

/// Steps one environment across iterations, carrying the unfinished episode.
#[derive(Clone, Debug)]
pub struct Collector {
    env: Environment,
    state: Option<Vec<f64>>,
    trace: EpisodeTrace,
    episodes_completed: u64,
    timesteps: u64,
}

impl Collector {
    pub fn new(env: Environment) -> Self {
        Collector {
            env,
            state: None,
            trace: EpisodeTrace::default(),
            episodes_completed: 0,
            timesteps: 0,
        }
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn timesteps(&self) -> u64 {
        self.timesteps
    }

    pub fn episodes_completed(&self) -> u64 {
        self.episodes_completed
    }

    pub fn snapshot(&self) -> CollectorState {
        CollectorState {
            state: self.state.clone(),
            elapsed: self.env.elapsed(),
            trace: self.trace.clone(),
            episodes_completed: self.episodes_completed,
            timesteps: self.timesteps,
        }
    }

    pub fn restore(&mut self, s: CollectorState) {
        self.env.set_elapsed(s.elapsed);
        self.state = s.state;
        self.trace = s.trace;
        self.episodes_completed = s.episodes_completed;
        self.timesteps = s.timesteps;
    }

    /// Run the policy for exactly `horizon` steps, resetting after every
    /// boundary. Returns the buffer and the episodes that finished during it.
    pub fn collect<R: Rng + ?Sized>(
        &mut self,
        policy: &GaussianPolicy,
        value: &ValueNetwork,
        horizon: usize,
        rng: &mut R,
    ) -> Result<(RolloutBuffer, Vec<EpisodeTrace>)> {
        if horizon == 0 {
            return Err(Error::Empty("rollout horizon"));
        }
        let mut buf = RolloutBuffer {
            dt: self.env.spec().dt,
            ..Default::default()
        };
        let mut finished = Vec::new();
        let mut cached_value: Option<f64> = None;
        for _ in 0..horizon {
            let state = match self.state.take() {
                Some(s) => s,
                None => {
                    cached_value = None;
                    self.env.reset(rng)
                }
            };
            let action = policy.sample(&state, rng)?;
            let log_prob = policy.log_prob(&state, &action)?;
            if !log_prob.is_finite() {
                return Err(Error::NonFinite(format!("log-probability at state {state:?}")));
            }
            let v = match cached_value {
                Some(v) => v,
                None => value.eval(&state)?,
            };
            let step = self.env.step(&state, &action)?;
            let next_value = value.eval(&step.next_state)?;
            let tr = Transition {
                state,
                action,
                reward: step.reward,
                next_state: step.next_state,
                done: step.done,
                truncated: step.truncated,
            };
            buf.push(&tr, log_prob, v, next_value);
            self.timesteps += 1;
            let boundary = tr.done || tr.truncated;
            if boundary {
                cached_value = None;
            } else {
                cached_value = Some(next_value);
                self.state = Some(tr.next_state.clone());
            }
            self.trace.transitions.push(tr);
            if boundary {
                let mut ep = std::mem::take(&mut self.trace);
                ep.index = self.episodes_completed;
                ep.end_timestep = self.timesteps;
                self.episodes_completed += 1;
                finished.push(ep);
            }
        }
        Ok((buf, finished))
    }
}
