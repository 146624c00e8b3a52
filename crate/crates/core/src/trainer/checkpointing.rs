use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AdamState, TrainingRun};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::metrics::{EpisodeRecord, IterationRecord, MetricsSink};
use crate::networks::checkpoint::FORMAT_VERSION;
use crate::networks::{Checkpoint, CheckpointMeta, GaussianPolicy, ValueNetwork};
use crate::rollout::{Collector, CollectorState};

impl TrainingRun {
    pub fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            format_version: FORMAT_VERSION,
            algorithm: self.config.algorithm.as_str().to_owned(),
            environment: self.env().spec().name.clone(),
            value_layout: self.value.layout().clone(),
            policy_mean_layout: self.policy.mean_layout().clone(),
            iteration: self.iteration,
            timesteps: self.collector.timesteps(),
        }
    }

    /// Everything needed to continue the run bit-identically.
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new();
        ck.put_json("config", &self.config)?;
        ck.put_f64s("policy", self.policy.params());
        ck.put_f64s("value", self.value.params());
        ck.put_json("policy_adam", &self.policy_adam)?;
        ck.put_json("value_adam", &self.value_adam)?;
        ck.put_bytes("rng_seed", self.rng.get_seed().to_vec());
        let pos = self.rng.get_word_pos();
        ck.put_u64s("rng_position", &[self.rng.get_stream(), pos as u64, (pos >> 64) as u64]);
        ck.put_json("collector", &self.collector.snapshot())?;
        ck.put_json("episodes", &self.metrics.episodes)?;
        ck.put_json("iterations", &self.metrics.iterations)?;
        ck.put_u64s("iteration", &[self.iteration]);
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint, meta: &CheckpointMeta) -> Result<Self> {
        let bad = |reason: String| Error::Checkpoint {
            path: Default::default(),
            reason,
        };
        if meta.format_version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {}", meta.format_version)));
        }
        let config: RunConfig = ck.json("config")?;
        config.validate()?;
        let env = config.build_environment()?;
        let policy = GaussianPolicy::from_params(meta.policy_mean_layout.clone(), ck.f64s("policy")?)?;
        let value = ValueNetwork::from_params(meta.value_layout.clone(), ck.f64s("value")?)?;
        let spec = env.spec();
        if value.state_dim() != spec.state_dim || policy.action_dim() != spec.action_dim {
            return Err(bad(format!(
                "network shapes do not match environment `{}`",
                spec.name
            )));
        }
        let policy_adam: AdamState = ck.json("policy_adam")?;
        let value_adam: AdamState = ck.json("value_adam")?;
        if policy_adam.len() != policy.params().len() || value_adam.len() != value.params().len() {
            return Err(bad("optimizer state does not match parameter count".into()));
        }
        let seed: [u8; 32] = ck
            .bytes("rng_seed")?
            .try_into()
            .map_err(|_| bad("rng seed must be 32 bytes".into()))?;
        let pos = ck.u64s("rng_position")?;
        if pos.len() != 3 {
            return Err(bad("rng position must hold 3 words".into()));
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(pos[0]);
        rng.set_word_pos(pos[1] as u128 | (pos[2] as u128) << 64);
        let mut collector = Collector::new(env);
        collector.restore(ck.json::<CollectorState>("collector")?);
        let episodes: Vec<EpisodeRecord> = ck.json("episodes")?;
        let iterations: Vec<IterationRecord> = ck.json("iterations")?;
        let iteration = *ck
            .u64s("iteration")?
            .first()
            .ok_or_else(|| bad("missing iteration counter".into()))?;
        Ok(TrainingRun {
            lambda_hjb: config.effective_lambda_hjb()?,
            config,
            policy,
            value,
            policy_adam,
            value_adam,
            rng,
            collector,
            metrics: MetricsSink::from_records(episodes, iterations)?,
            iteration,
        })
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        self.to_checkpoint()?.save(path, &self.meta())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let (ck, meta) = Checkpoint::load(path)?;
        Self::from_checkpoint(&ck, &meta).map_err(|e| match e {
            Error::Checkpoint { reason, .. } => Error::Checkpoint {
                path: path.to_owned(),
                reason,
            },
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use crate::config::RunConfig;
    use crate::trainer::{Algorithm, TrainingRun};

    fn config() -> RunConfig {
        let mut c = RunConfig {
            algorithm: Algorithm::Hjbppo,
            environment: Some("pendulum".into()),
            ..Default::default()
        };
        c.hyperparameters.horizon = 96;
        c.hyperparameters.minibatch_size = 32;
        c.hyperparameters.num_epochs = 2;
        c.hyperparameters.total_timesteps = 96 * 4;
        c.hyperparameters.lambda_hjb = Some(0.01);
        c.environment_overrides.max_episode_steps = Some(40);
        c.trainer.hidden = vec![8];
        c
    }

    #[test]
    fn resume_is_bit_identical() {
        let c = config();
        let mut straight = TrainingRun::new(&c).unwrap();
        for _ in 0..4 {
            straight.train_iteration().unwrap();
        }

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.ckpt");
        let mut first = TrainingRun::new(&c).unwrap();
        for _ in 0..2 {
            first.train_iteration().unwrap();
        }
        first.save_checkpoint(&path).unwrap();
        drop(first);
        let mut resumed = TrainingRun::load_checkpoint(&path).unwrap();
        assert_eq!(resumed.iteration, 2);
        for _ in 0..2 {
            resumed.train_iteration().unwrap();
        }
        assert_eq!(straight.policy.params(), resumed.policy.params());
        assert_eq!(straight.value.params(), resumed.value.params());
        assert_eq!(
            straight.metrics.episodes_csv().unwrap(),
            resumed.metrics.episodes_csv().unwrap()
        );
        assert_eq!(
            straight.metrics.iterations_csv().unwrap(),
            resumed.metrics.iterations_csv().unwrap()
        );
    }

    #[test]
    fn corrupted_checkpoint_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.ckpt");
        TrainingRun::new(&config()).unwrap().save_checkpoint(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() / 2);
        std::fs::write(&path, bytes).unwrap();
        assert!(TrainingRun::load_checkpoint(&path).is_err());
    }
}
