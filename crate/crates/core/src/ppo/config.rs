use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// PPO and rollout hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    /// Environment steps between updates.
    pub t_ppo: usize,
    /// Passes over each collected segment.
    pub k_ppo: usize,
    pub clip_eps: f64,
    pub learning_rate: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// Passes over the training set.
    pub epochs: usize,
    /// Generations per episode.
    pub budget: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            t_ppo: 10,
            k_ppo: 3,
            clip_eps: 0.2,
            learning_rate: 3e-4,
            gamma: 0.99,
            gae_lambda: 0.95,
            value_coef: 0.5,
            entropy_coef: 0.0,
            epochs: 10,
            budget: 250,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_owned()));
        if self.clip_eps.is_nan() || self.clip_eps <= 0.0 {
            return bad("clip_eps must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if self.t_ppo == 0 {
            return bad("t_ppo must be at least 1");
        }
        if self.k_ppo == 0 {
            return bad("k_ppo must be at least 1");
        }
        if self.budget == 0 {
            return bad("budget must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}

/// Everything `train` needs, as read from a TOML file.
///
/// ```toml
/// dataset = "train.jsonl"
/// population = 50
/// tasks = 10
/// dim = 50
/// seed = 1
///
/// [ppo]
/// epochs = 10
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub dataset: PathBuf,
    #[serde(default = "default_population")]
    pub population: usize,
    /// Expected task count of every instance; checked when the dataset loads.
    pub tasks: Option<usize>,
    /// Expected sub-task dimension; checked when the dataset loads.
    pub dim: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ppo: PpoConfig,
}

fn default_population() -> usize {
    50
}

impl TrainingConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.ppo.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a relative dataset path is resolved against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        if cfg.dataset.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.dataset = dir.join(&cfg.dataset);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}
