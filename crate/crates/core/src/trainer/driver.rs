use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{IterationOutcome, TrainingRun};
use crate::config::RunConfig;
use crate::environments::Environment;
use crate::error::{Error, Result};
use crate::metrics::write_file;
use crate::networks::GaussianPolicy;

/// Called after every iteration.
pub type ProgressFn<'a> = dyn FnMut(&TrainingRun, &IterationOutcome) + 'a;

/// File layout of one run directory.
#[derive(Clone, Debug, PartialEq)]
pub struct RunArtifacts {
    pub dir: PathBuf,
}

impl RunArtifacts {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        RunArtifacts { dir: dir.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.dir.join("config.toml")
    }

    pub fn episodes_csv(&self) -> PathBuf {
        self.dir.join("metrics.csv")
    }

    pub fn iterations_csv(&self) -> PathBuf {
        self.dir.join("iterations.csv")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.dir.join("checkpoint.ckpt")
    }

    pub fn scheduled_checkpoint(&self, iteration: u64) -> PathBuf {
        self.dir.join("checkpoints").join(format!("iter_{iteration:06}.ckpt"))
    }
}

/// [`train_with`] without progress reporting or resumption.
pub fn train(config: &RunConfig) -> Result<TrainingRun> {
    train_with(config, false, None)
}

/// Run `total_timesteps / horizon` iterations, writing metrics after each one,
/// checkpoints on schedule and charts at the end. With `resume`, an existing
/// `checkpoint.ckpt` in the output directory is continued instead.
pub fn train_with(config: &RunConfig, resume: bool, mut progress: Option<&mut ProgressFn<'_>>) -> Result<TrainingRun> {
    config.validate()?;
    let out = RunArtifacts::new(&config.output_dir);
    fs::create_dir_all(&out.dir).map_err(|e| Error::io(&out.dir, e))?;
    let mut run = if resume && out.checkpoint().exists() {
        let run = TrainingRun::load_checkpoint(&out.checkpoint())?;
        if run.config.resolved()? != config.resolved()? {
            return Err(Error::Checkpoint {
                path: out.checkpoint(),
                reason: "stored configuration differs from the requested one".into(),
            });
        }
        run
    } else {
        TrainingRun::new(config)?
    };
    write_file(&out.config(), config.resolved()?.to_toml())?;

    while !run.is_finished() {
        let step = run.train_iteration();
        write_metrics(&run, &out)?;
        let outcome = step?;
        if let Some(cb) = progress.as_deref_mut() {
            cb(&run, &outcome);
        }
        let every = config.checkpoint_interval;
        if every > 0 && run.iteration % every == 0 {
            let path = out.scheduled_checkpoint(run.iteration);
            let parent = path.parent().expect("checkpoint path has a parent");
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            run.save_checkpoint(&path)?;
        }
    }
    run.save_checkpoint(&out.checkpoint())?;
    if !run.metrics.episodes.is_empty() {
        run.metrics.export_charts(&out.dir, run.config.algorithm.as_str())?;
    }
    Ok(run)
}

fn write_metrics(run: &TrainingRun, out: &RunArtifacts) -> Result<()> {
    write_file(&out.episodes_csv(), run.metrics.episodes_csv()?)?;
    if !run.metrics.iterations.is_empty() {
        write_file(&out.iterations_csv(), run.metrics.iterations_csv()?)?;
    }
    Ok(())
}

/// Total rewards of `episodes` full episodes under the mode controller.
/// Only the initial states are random, drawn from `seed`.
pub fn evaluate(policy: &GaussianPolicy, env: &Environment, episodes: usize, seed: u64) -> Result<Vec<f64>> {
    let mut env = env.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut totals = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut x = env.reset(&mut rng);
        let mut total = 0.0;
        loop {
            let u = policy.mode(&x)?;
            let step = env.step(&x, &u)?;
            total += step.reward;
            if step.done || step.truncated {
                break;
            }
            x = step.next_state;
        }
        totals.push(total);
    }
    Ok(totals)
}

/// Path helper for callers that only know the run directory.
pub fn checkpoint_in(dir: &Path) -> PathBuf {
    RunArtifacts::new(dir).checkpoint()
}
