//! The training loop: collect a horizon of experience, estimate advantages,
//! then run epochs of shuffled minibatch updates on the policy (clipped
//! surrogate, ascent) and the value network (`0.5·MSE_u + λ·MSE_f`, descent).

mod adam;
mod checkpointing;
mod driver;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::config::RunConfig;
use crate::environments::Environment;
use crate::error::{Error, Result};
use crate::losses::{
    bellman_value_loss, hjb_residuals, ppo_clip_objective, value_objective_on, BellmanTarget,
    HjbInput, HjbTerm, InputGradMode, LossReport, ValueObjectiveOptions, ValueSample,
};
use crate::metrics::{EpisodeRecord, IterationRecord, MetricsSink};
use crate::networks::{GaussianPolicy, ValueNetwork, DEFAULT_HIDDEN};
use crate::rollout::{compute_gae, finite_difference, normalize_advantages, Collector, EpisodeTrace, RolloutBuffer};

pub use adam::{adam_step, clip_global_norm, AdamState};
pub use driver::{checkpoint_in, evaluate, train, train_with, ProgressFn, RunArtifacts};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ppo,
    #[default]
    Hjbppo,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Ppo => "ppo",
            Algorithm::Hjbppo => "hjbppo",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ppo" => Ok(Algorithm::Ppo),
            "hjbppo" => Ok(Algorithm::Hjbppo),
            _ => Err(Error::InvalidConfig(vec![format!(
                "`algorithm`: expected `ppo` or `hjbppo`, got `{s}`"
            )])),
        }
    }
}

/// λ_HJB used in the original MuJoCo experiments, kept for reference.
pub const REFERENCE_LAMBDA_HJB: [(&str, f64); 10] = [
    ("Ant-v4", 0.1),
    ("HalfCheetah-v4", 0.1),
    ("Humanoid-v4", 1e-4),
    ("HumanoidStandup-v4", 1.0),
    ("InvertedPendulum-v4", 1e-4),
    ("InvertedDoublePendulum-v4", 1e-3),
    ("Reacher-v4", 1.0),
    ("Swimmer-v4", 1e-4),
    ("Hopper-v4", 0.1),
    ("Walker2d-v4", 0.1),
];

/// λ_HJB used when the configuration leaves it unset.
pub fn default_lambda_hjb(environment: &str) -> f64 {
    match environment {
        "lqr" => 1.0,
        "pendulum" => 1e-3,
        "point_mass" => 0.1,
        _ => 0.1,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    pub horizon: usize,
    pub adam_stepsize: f64,
    pub num_epochs: usize,
    pub minibatch_size: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    /// `None` selects [`default_lambda_hjb`] for the environment.
    pub lambda_hjb: Option<f64>,
    pub total_timesteps: u64,
    pub seed: u64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            horizon: 2048,
            adam_stepsize: 3e-4,
            num_epochs: 10,
            minibatch_size: 64,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            lambda_hjb: None,
            total_timesteps: 1_000_000,
            seed: 0,
        }
    }
}

impl Hyperparameters {
    pub fn problems(&self) -> Vec<String> {
        let mut e = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                e.push(msg);
            }
        };
        check(self.horizon > 0, "`hyperparameters.horizon` must be at least 1".into());
        check(
            self.adam_stepsize > 0.0 && self.adam_stepsize.is_finite(),
            format!("`hyperparameters.adam_stepsize` must be positive, got {}", self.adam_stepsize),
        );
        check(self.num_epochs > 0, "`hyperparameters.num_epochs` must be at least 1".into());
        check(self.minibatch_size > 0, "`hyperparameters.minibatch_size` must be at least 1".into());
        check(
            self.gamma > 0.0 && self.gamma < 1.0,
            format!("`hyperparameters.gamma` must lie in (0, 1), got {}", self.gamma),
        );
        check(
            (0.0..=1.0).contains(&self.gae_lambda),
            format!("`hyperparameters.gae_lambda` must lie in [0, 1], got {}", self.gae_lambda),
        );
        check(
            self.clip_epsilon > 0.0 && self.clip_epsilon.is_finite(),
            format!("`hyperparameters.clip_epsilon` must be positive, got {}", self.clip_epsilon),
        );
        if let Some(l) = self.lambda_hjb {
            check(
                l >= 0.0 && l.is_finite(),
                format!("`hyperparameters.lambda_hjb` must be non-negative, got {l}"),
            );
        }
        check(
            self.total_timesteps >= self.horizon as u64,
            format!(
                "`hyperparameters.total_timesteps` ({}) must be at least one horizon ({})",
                self.total_timesteps, self.horizon
            ),
        );
        e
    }

    pub fn iterations(&self) -> u64 {
        self.total_timesteps / self.horizon as u64
    }
}

/// Which samples form a batch for the value update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// The same shuffled minibatches as the policy update.
    #[default]
    Minibatch,
    /// Each batch is one contiguous episode segment of the rollout.
    Episode,
}

/// The discount whose logarithm multiplies `V` in the HJB residual.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HjbDiscount {
    /// `γ^(1/dt)`, the discount per unit time implied by the per-step `γ`.
    #[default]
    PerUnitTime,
    /// The per-step `γ` itself.
    PerStep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerOptions {
    /// Hidden widths of both networks.
    pub hidden: Vec<usize>,
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
    pub bellman_target: BellmanTarget,
    pub input_grad_mode: InputGradMode,
    pub value_granularity: Granularity,
    pub hjb_discount: HjbDiscount,
    /// Above this pre-update MSE_f, λ_HJB is scaled by `threshold / MSE_f`.
    pub hjb_overflow_threshold: f64,
    pub init_log_std: f64,
}

impl Default for TrainerOptions {
    fn default() -> Self {
        TrainerOptions {
            hidden: DEFAULT_HIDDEN.to_vec(),
            max_grad_norm: 0.5,
            normalize_advantages: true,
            bellman_target: BellmanTarget::Stop,
            input_grad_mode: InputGradMode::Full,
            value_granularity: Granularity::Minibatch,
            hjb_discount: HjbDiscount::PerUnitTime,
            hjb_overflow_threshold: 1e6,
            init_log_std: 0.0,
        }
    }
}

impl TrainerOptions {
    pub fn problems(&self) -> Vec<String> {
        let mut e = Vec::new();
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            e.push("`trainer.hidden` must list at least one positive width".into());
        }
        if !(self.max_grad_norm > 0.0) {
            e.push(format!("`trainer.max_grad_norm` must be positive, got {}", self.max_grad_norm));
        }
        if !(self.hjb_overflow_threshold > 0.0) {
            e.push(format!(
                "`trainer.hjb_overflow_threshold` must be positive, got {}",
                self.hjb_overflow_threshold
            ));
        }
        if !self.init_log_std.is_finite() {
            e.push("`trainer.init_log_std` must be finite".into());
        }
        e
    }
}

/// Everything that determines the rest of a run.
#[derive(Clone, Debug)]
pub struct TrainingRun {
    pub config: RunConfig,
    /// λ_HJB before the overflow guard; zero for PPO.
    pub lambda_hjb: f64,
    pub policy: GaussianPolicy,
    pub value: ValueNetwork,
    pub policy_adam: AdamState,
    pub value_adam: AdamState,
    pub rng: ChaCha8Rng,
    pub collector: Collector,
    pub metrics: MetricsSink,
    pub iteration: u64,
}

/// What one iteration produced besides the parameter updates.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationOutcome {
    pub report: LossReport,
    pub episodes: Vec<EpisodeRecord>,
    /// `max |r − 1|` over the first minibatch of the first epoch.
    pub first_ratio_deviation: f64,
    /// The overflow guard reduced λ_HJB this iteration.
    pub guard_active: bool,
}

impl TrainingRun {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let env = config.build_environment()?;
        let spec = env.spec();
        let hidden = &config.trainer.hidden;
        let mut rng = ChaCha8Rng::seed_from_u64(config.hyperparameters.seed);
        let mut policy = GaussianPolicy::new(spec.state_dim, spec.action_dim, hidden, &mut rng)?;
        policy.log_std_mut().fill(config.trainer.init_log_std);
        let value = ValueNetwork::new(spec.state_dim, hidden, &mut rng)?;
        Ok(TrainingRun {
            lambda_hjb: config.effective_lambda_hjb()?,
            policy_adam: AdamState::new(policy.params().len()),
            value_adam: AdamState::new(value.params().len()),
            policy,
            value,
            rng,
            collector: Collector::new(env),
            metrics: MetricsSink::new(),
            iteration: 0,
            config: config.clone(),
        })
    }

    pub fn env(&self) -> &Environment {
        self.collector.env()
    }

    /// Discount used in `V·ln γ`.
    pub fn hjb_gamma(&self) -> f64 {
        let spec = self.env().spec();
        match self.config.trainer.hjb_discount {
            HjbDiscount::PerUnitTime => spec.continuous_gamma(),
            HjbDiscount::PerStep => spec.gamma,
        }
    }

    pub fn total_iterations(&self) -> u64 {
        self.config.hyperparameters.iterations()
    }

    pub fn is_finished(&self) -> bool {
        self.iteration >= self.total_iterations()
    }

    /// Per-episode diagnostics with the current value network.
    pub fn episode_record(&self, ep: &EpisodeTrace) -> Result<EpisodeRecord> {
        let spec = self.env().spec();
        let tr = &ep.transitions;
        let states: Vec<Vec<f64>> = tr.iter().map(|t| t.state.clone()).collect();
        let next: Vec<Vec<f64>> = tr.iter().map(|t| t.next_state.clone()).collect();
        let rewards: Vec<f64> = tr.iter().map(|t| t.reward).collect();
        let dones: Vec<bool> = tr.iter().map(|t| t.done).collect();
        let bellman_loss = bellman_value_loss(&self.value, &states, &rewards, &next, &dones, spec.gamma)?;
        let interior: Vec<_> = tr.iter().filter(|t| !(t.done || t.truncated)).collect();
        let hjb_loss = if interior.is_empty() {
            0.0
        } else {
            let xs: Vec<Vec<f64>> = interior.iter().map(|t| t.state.clone()).collect();
            let rates: Vec<f64> = interior.iter().map(|t| spec.reward_rate(t.reward)).collect();
            let f: Vec<Vec<f64>> = interior
                .iter()
                .map(|t| finite_difference(&t.state, &t.next_state, spec.dt))
                .collect();
            crate::losses::hjb_loss(&hjb_residuals(&self.value, &xs, &rates, &f, self.hjb_gamma())?)
        };
        Ok(EpisodeRecord {
            episode: ep.index,
            timestep: ep.end_timestep,
            reward: ep.total_reward(),
            length: ep.len() as u64,
            hjb_loss,
            bellman_loss,
        })
    }

    /// One collect-then-update cycle.
    pub fn train_iteration(&mut self) -> Result<IterationOutcome> {
        let hp = self.config.hyperparameters.clone();
        let opts = self.config.trainer.clone();
        let iteration = self.iteration;
        let diverged = |what: String| Error::Divergence(format!("iteration {iteration}: {what}"));

        let (buf, finished) = self.collector.collect(&self.policy, &self.value, hp.horizon, &mut self.rng)?;
        let mut episodes = Vec::with_capacity(finished.len());
        for ep in &finished {
            let rec = self.episode_record(ep)?;
            if !(rec.reward.is_finite() && rec.hjb_loss.is_finite() && rec.bellman_loss.is_finite()) {
                return Err(diverged(format!("non-finite metrics for episode {}: {rec:?}", rec.episode)));
            }
            episodes.push(rec);
        }

        let adv = compute_gae(&buf, hp.gamma, hp.gae_lambda).advantages;
        let spec = self.env().spec().clone();
        let hjb_gamma = self.hjb_gamma();
        let samples: Vec<ValueSample<'_>> = (0..buf.len())
            .map(|i| ValueSample {
                state: &buf.states[i],
                reward: buf.rewards[i],
                next_state: &buf.next_states[i],
                done: buf.dones[i],
                hjb: (!buf.is_boundary(i)).then(|| HjbInput {
                    reward_rate: spec.reward_rate(buf.rewards[i]),
                    dynamics: &buf.dynamics_estimates[i],
                }),
            })
            .collect();

        // Whole-buffer losses before any update; they also drive the guard.
        let (mse_u, mse_f) = pre_update_losses(&self.value, &buf, &samples, hp.gamma, hjb_gamma)?;
        if !(mse_u.is_finite() && mse_f.is_finite()) {
            return Err(diverged(format!("pre-update losses MSE_u={mse_u}, MSE_f={mse_f}")));
        }
        let guard_active = self.lambda_hjb > 0.0 && mse_f > opts.hjb_overflow_threshold;
        let lambda_eff = if guard_active {
            self.lambda_hjb * opts.hjb_overflow_threshold / mse_f
        } else {
            self.lambda_hjb
        };
        let value_opts = ValueObjectiveOptions {
            gamma: hp.gamma,
            target: opts.bellman_target,
            hjb: (lambda_eff > 0.0).then_some(HjbTerm {
                lambda: lambda_eff,
                gamma: hjb_gamma,
                mode: opts.input_grad_mode,
            }),
        };

        let segments = episode_segments(&buf);
        let mut order: Vec<usize> = (0..buf.len()).collect();
        let mut seg_order: Vec<usize> = (0..segments.len()).collect();
        let mut tape = Tape::new();
        let mut adj = Vec::new();
        let mut surrogate_sum = 0.0;
        let mut clip_sum = 0.0;
        let mut n_minibatches = 0usize;
        let mut first_ratio_deviation = None;

        for _epoch in 0..hp.num_epochs {
            order.shuffle(&mut self.rng);
            for mb in order.chunks(hp.minibatch_size) {
                let (surrogate, clip_fraction, dev) =
                    self.policy_update(&mut tape, &mut adj, &buf, &adv, mb, &hp, &opts)?;
                first_ratio_deviation.get_or_insert(dev);
                surrogate_sum += surrogate;
                clip_sum += clip_fraction;
                n_minibatches += 1;
                if opts.value_granularity == Granularity::Minibatch {
                    let batch: Vec<ValueSample<'_>> = mb.iter().map(|&i| samples[i]).collect();
                    self.value_update(&mut tape, &mut adj, &batch, &value_opts, hp.adam_stepsize, opts.max_grad_norm)?;
                }
            }
            if opts.value_granularity == Granularity::Episode {
                seg_order.shuffle(&mut self.rng);
                for &s in &seg_order {
                    let batch = &samples[segments[s].clone()];
                    self.value_update(&mut tape, &mut adj, batch, &value_opts, hp.adam_stepsize, opts.max_grad_norm)?;
                }
            }
        }

        let n = n_minibatches.max(1) as f64;
        let report = LossReport::new(surrogate_sum / n, mse_u, mse_f, lambda_eff, clip_sum / n);
        for rec in &episodes {
            self.metrics.record_episode(rec.clone())?;
        }
        self.iteration += 1;
        let log_std = self.policy.log_std();
        self.metrics.record_iteration(IterationRecord {
            iteration: self.iteration,
            timesteps: self.collector.timesteps(),
            episodes: self.collector.episodes_completed(),
            losses: report.clone(),
            mean_log_std: log_std.iter().sum::<f64>() / log_std.len() as f64,
        });
        Ok(IterationOutcome {
            report,
            episodes,
            first_ratio_deviation: first_ratio_deviation.unwrap_or(0.0),
            guard_active,
        })
    }

    /// Ascent on the clipped surrogate over one minibatch. Returns the
    /// surrogate, the clip fraction and `max |r − 1|`.
    #[allow(clippy::too_many_arguments)]
    fn policy_update(
        &mut self,
        tape: &mut Tape,
        adj: &mut Vec<f64>,
        buf: &RolloutBuffer,
        adv: &[f64],
        mb: &[usize],
        hp: &Hyperparameters,
        opts: &TrainerOptions,
    ) -> Result<(f64, f64, f64)> {
        tape.clear();
        let params = tape.leaves(self.policy.params());
        let lps: Vec<_> = mb
            .iter()
            .map(|&i| self.policy.record_log_prob(tape, params, &buf.states[i], &buf.actions[i]))
            .collect();
        let new: Vec<f64> = lps.iter().map(|&v| tape.value(v)).collect();
        let old: Vec<f64> = mb.iter().map(|&i| buf.log_probs_old[i]).collect();
        let raw: Vec<f64> = mb.iter().map(|&i| adv[i]).collect();
        let a = if opts.normalize_advantages && raw.len() > 1 {
            normalize_advantages(&raw)
        } else {
            raw
        };
        let clip = ppo_clip_objective(&new, &old, &a, hp.clip_epsilon).map_err(|e| {
            Error::Divergence(format!("iteration {}: policy objective: {e}", self.iteration))
        })?;
        if !clip.objective.is_finite() {
            return Err(Error::Divergence(format!(
                "iteration {}: non-finite policy surrogate",
                self.iteration
            )));
        }
        let deviation = clip.ratios.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
        // Descent on −L.
        let seeds: Vec<_> = lps.iter().zip(&clip.log_prob_seeds).map(|(&v, &s)| (v, -s)).collect();
        tape.backward_into(adj, &seeds);
        let mut grad = adj[params.range()].to_vec();
        clip_global_norm(&mut grad, opts.max_grad_norm);
        adam_step(&mut self.policy_adam, self.policy.params_mut(), &grad, hp.adam_stepsize)
            .map_err(|e| Error::Divergence(format!("iteration {}: policy update: {e}", self.iteration)))?;
        Ok((clip.objective, clip.clip_fraction, deviation))
    }

    fn value_update(
        &mut self,
        tape: &mut Tape,
        adj: &mut Vec<f64>,
        batch: &[ValueSample<'_>],
        opts: &ValueObjectiveOptions,
        stepsize: f64,
        max_grad_norm: f64,
    ) -> Result<()> {
        let mut obj = value_objective_on(tape, adj, &self.value, batch, opts)?;
        if !obj.objective.is_finite() {
            return Err(Error::Divergence(format!(
                "iteration {}: non-finite value objective (MSE_u={}, MSE_f={})",
                self.iteration, obj.mse_u, obj.mse_f
            )));
        }
        clip_global_norm(&mut obj.gradient, max_grad_norm);
        adam_step(&mut self.value_adam, self.value.params_mut(), &obj.gradient, stepsize)
            .map_err(|e| Error::Divergence(format!("iteration {}: value update: {e}", self.iteration)))
    }
}

/// `(MSE_u, MSE_f)` over the whole buffer with the current value network.
fn pre_update_losses(
    value: &ValueNetwork,
    buf: &RolloutBuffer,
    samples: &[ValueSample<'_>],
    gamma: f64,
    hjb_gamma: f64,
) -> Result<(f64, f64)> {
    let mse_u = bellman_value_loss(value, &buf.states, &buf.rewards, &buf.next_states, &buf.dones, gamma)?;
    let interior: Vec<(usize, HjbInput<'_>)> =
        samples.iter().enumerate().filter_map(|(i, s)| s.hjb.map(|h| (i, h))).collect();
    if interior.is_empty() {
        return Ok((mse_u, 0.0));
    }
    let xs: Vec<Vec<f64>> = interior.iter().map(|(i, _)| buf.states[*i].clone()).collect();
    let rates: Vec<f64> = interior.iter().map(|(_, h)| h.reward_rate).collect();
    let f: Vec<Vec<f64>> = interior.iter().map(|(_, h)| h.dynamics.to_vec()).collect();
    let mse_f = crate::losses::hjb_loss(&hjb_residuals(value, &xs, &rates, &f, hjb_gamma)?);
    Ok((mse_u, mse_f))
}

/// Contiguous index ranges of the buffer, split after every boundary.
fn episode_segments(buf: &RolloutBuffer) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for t in 0..buf.len() {
        if buf.is_boundary(t) || t + 1 == buf.len() {
            out.push(start..t + 1);
            start = t + 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(algorithm: Algorithm, lambda: Option<f64>) -> RunConfig {
        let mut c = RunConfig {
            algorithm,
            environment: Some("lqr".into()),
            ..Default::default()
        };
        c.hyperparameters.horizon = 128;
        c.hyperparameters.minibatch_size = 32;
        c.hyperparameters.num_epochs = 2;
        c.hyperparameters.total_timesteps = 256;
        c.hyperparameters.lambda_hjb = lambda;
        c.environment_overrides.max_episode_steps = Some(50);
        c.trainer.hidden = vec![8, 8];
        c
    }

    #[test]
    fn table_defaults() {
        let h = Hyperparameters::default();
        assert_eq!(h.horizon, 2048);
        assert_eq!(h.adam_stepsize, 3e-4);
        assert_eq!(h.num_epochs, 10);
        assert_eq!(h.minibatch_size, 64);
        assert_eq!(h.gamma, 0.99);
        assert_eq!(h.gae_lambda, 0.95);
        assert!(h.clip_epsilon > 0.0);
        let o = TrainerOptions::default();
        assert_eq!(o.max_grad_norm, 0.5);
        assert_eq!(o.hjb_overflow_threshold, 1e6);
    }

    #[test]
    fn reference_lambdas() {
        let get = |n: &str| REFERENCE_LAMBDA_HJB.iter().find(|(k, _)| *k == n).unwrap().1;
        assert_eq!(get("Ant-v4"), 0.1);
        assert_eq!(get("HumanoidStandup-v4"), 1.0);
        assert_eq!(get("InvertedDoublePendulum-v4"), 1e-3);
        assert_eq!(get("Swimmer-v4"), 1e-4);
        assert!(REFERENCE_LAMBDA_HJB.iter().all(|(_, l)| *l > 0.0));
    }

    #[test]
    fn iteration_count() {
        let mut h = Hyperparameters {
            total_timesteps: 2048,
            ..Default::default()
        };
        assert_eq!(h.iterations(), 1);
        h.total_timesteps = 5000;
        assert_eq!(h.iterations(), 2);
    }

    #[test]
    fn first_ratio_is_one_and_run_is_deterministic() {
        let c = tiny(Algorithm::Hjbppo, Some(0.1));
        let mut a = TrainingRun::new(&c).unwrap();
        let mut b = TrainingRun::new(&c).unwrap();
        for _ in 0..2 {
            let oa = a.train_iteration().unwrap();
            let ob = b.train_iteration().unwrap();
            assert!(oa.first_ratio_deviation < 1e-10);
            assert_eq!(oa, ob);
        }
        assert_eq!(a.policy.params(), b.policy.params());
        assert_eq!(a.value.params(), b.value.params());
        assert_eq!(a.metrics.episodes_csv().unwrap(), b.metrics.episodes_csv().unwrap());
    }

    #[test]
    fn zero_weight_is_ppo() {
        let mut p = TrainingRun::new(&tiny(Algorithm::Ppo, None)).unwrap();
        let mut h = TrainingRun::new(&tiny(Algorithm::Hjbppo, Some(0.0))).unwrap();
        for _ in 0..2 {
            assert_eq!(p.train_iteration().unwrap(), h.train_iteration().unwrap());
        }
        assert_eq!(p.value.params(), h.value.params());
        assert_eq!(p.metrics.iterations_csv().unwrap(), h.metrics.iterations_csv().unwrap());
    }

    #[test]
    fn hjb_weight_changes_only_the_value_path_first() {
        // Parameter isolation: in the first iteration the policy update does
        // not depend on the value loss, so the policies agree after it.
        let mut p = TrainingRun::new(&tiny(Algorithm::Ppo, None)).unwrap();
        let mut h = TrainingRun::new(&tiny(Algorithm::Hjbppo, Some(1.0))).unwrap();
        p.train_iteration().unwrap();
        h.train_iteration().unwrap();
        assert_eq!(p.policy.params(), h.policy.params());
        assert_ne!(p.value.params(), h.value.params());
    }

    #[test]
    fn guard_scales_lambda() {
        let mut c = tiny(Algorithm::Hjbppo, Some(0.5));
        c.trainer.hjb_overflow_threshold = 1e-12;
        let mut r = TrainingRun::new(&c).unwrap();
        let out = r.train_iteration().unwrap();
        assert!(out.guard_active);
        let expected = 0.5 * 1e-12 / out.report.mse_f;
        assert!((out.report.lambda_hjb - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn episode_granularity_runs() {
        let mut c = tiny(Algorithm::Hjbppo, Some(0.1));
        c.trainer.value_granularity = Granularity::Episode;
        let mut r = TrainingRun::new(&c).unwrap();
        r.train_iteration().unwrap();
        assert!(r.value.params().iter().all(|p| p.is_finite()));
    }

    #[test]
    fn segments_split_after_boundaries() {
        let buf = RolloutBuffer {
            dones: vec![false, true, false, false, false],
            truncateds: vec![false, false, false, true, false],
            states: vec![vec![0.0]; 5],
            ..Default::default()
        };
        assert_eq!(episode_segments(&buf), vec![0..2, 2..4, 4..5]);
    }

    #[test]
    fn validation_lists_everything() {
        let h = Hyperparameters {
            horizon: 0,
            minibatch_size: 0,
            clip_epsilon: 0.0,
            lambda_hjb: Some(-1.0),
            ..Default::default()
        };
        assert_eq!(h.problems().len(), 4);
    }
}
