//! Declarative run configuration: a TOML file whose every key has a default,
//! validated in full before any training starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::environments::{Environment, Integrator, ENVIRONMENT_NAMES};
use crate::error::{Error, Result};
use crate::trainer::{Algorithm, Hyperparameters, TrainerOptions};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentOverrides {
    pub dt: Option<f64>,
    pub max_episode_steps: Option<usize>,
    pub init_radius: Option<f64>,
    pub integrator: Option<Integrator>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub seeds: Vec<u64>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig { seeds: vec![0, 1, 2] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub environment: Option<String>,
    pub output_dir: PathBuf,
    /// Write a checkpoint every this many iterations; 0 writes only the final one.
    pub checkpoint_interval: u64,
    pub hyperparameters: Hyperparameters,
    pub environment_overrides: EnvironmentOverrides,
    pub trainer: TrainerOptions,
    pub compare: CompareConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            algorithm: Algorithm::Hjbppo,
            environment: None,
            output_dir: PathBuf::from("runs"),
            checkpoint_interval: 0,
            hyperparameters: Hyperparameters::default(),
            environment_overrides: EnvironmentOverrides::default(),
            trainer: TrainerOptions::default(),
            compare: CompareConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub algorithm: Option<Algorithm>,
    pub environment: Option<String>,
    pub total_timesteps: Option<u64>,
    pub lambda_hjb: Option<f64>,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.hyperparameters.seed = s;
        }
        if let Some(a) = o.algorithm {
            self.algorithm = a;
        }
        if let Some(e) = &o.environment {
            self.environment = Some(e.clone());
        }
        if let Some(t) = o.total_timesteps {
            self.hyperparameters.total_timesteps = t;
        }
        if let Some(l) = o.lambda_hjb {
            self.hyperparameters.lambda_hjb = Some(l);
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
    }

    pub fn environment_name(&self) -> Result<&str> {
        self.environment
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig(vec!["`environment` is required".into()]))
    }

    /// Every problem with the configuration, not just the first.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        match &self.environment {
            None => errs.push("`environment` is required".to_owned()),
            Some(name) if !ENVIRONMENT_NAMES.contains(&name.as_str()) => errs.push(format!(
                "`environment`: unknown environment `{name}` (expected one of {})",
                ENVIRONMENT_NAMES.join(", ")
            )),
            Some(_) => {}
        }
        errs.extend(self.hyperparameters.problems());
        errs.extend(self.trainer.problems());
        let o = &self.environment_overrides;
        if let Some(dt) = o.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                errs.push(format!("`environment_overrides.dt` must be positive, got {dt}"));
            }
        }
        if o.max_episode_steps == Some(0) {
            errs.push("`environment_overrides.max_episode_steps` must be at least 1".into());
        }
        if let Some(r) = o.init_radius {
            if !(r >= 0.0 && r.is_finite()) {
                errs.push(format!("`environment_overrides.init_radius` must be non-negative, got {r}"));
            }
        }
        if self.compare.seeds.is_empty() {
            errs.push("`compare.seeds` must list at least one seed".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errs))
        }
    }

    /// The configured environment with overrides applied and the discount
    /// taken from the hyperparameters.
    pub fn build_environment(&self) -> Result<Environment> {
        let mut env = Environment::by_name(self.environment_name()?)?;
        let o = &self.environment_overrides;
        {
            let spec = env.spec_mut();
            spec.gamma = self.hyperparameters.gamma;
            if let Some(dt) = o.dt {
                spec.dt = dt;
            }
            if let Some(n) = o.max_episode_steps {
                spec.max_episode_steps = n;
            }
            if let Some(i) = o.integrator {
                spec.integrator = i;
            }
            spec.validate()?;
        }
        if let Some(r) = o.init_radius {
            env.set_init_radius(r);
        }
        Ok(env)
    }

    /// λ_HJB actually used: zero for PPO, otherwise the configured value or
    /// the environment default.
    pub fn effective_lambda_hjb(&self) -> Result<f64> {
        Ok(match self.algorithm {
            Algorithm::Ppo => 0.0,
            Algorithm::Hjbppo => match self.hyperparameters.lambda_hjb {
                Some(l) => l,
                None => crate::trainer::default_lambda_hjb(self.environment_name()?),
            },
        })
    }

    /// Snapshot with every default made explicit, sufficient to reproduce the run.
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        c.hyperparameters.lambda_hjb = Some(self.effective_lambda_hjb()?);
        Ok(c)
    }
}
