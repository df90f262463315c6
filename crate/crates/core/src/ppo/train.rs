use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{compute_advantages, ppo_update, PpoConfig, Transition};
use crate::benchmark::MtoInstance;
use crate::engine::{EmtState, EngineConfig};
use crate::error::{Error, Result};
use crate::policy::{Mode, Policy, PolicyStreams};
use crate::seeds::{self, domain};

/// One row of the training log CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub instance_id: String,
    pub episode_return: f64,
    /// Per-generation convergence reward summed over tasks, averaged over the episode.
    #[serde(rename = "mean_Rc")]
    pub mean_rc: f64,
    /// Per-generation transfer reward summed over tasks, averaged over the episode.
    #[serde(rename = "mean_Rk")]
    pub mean_rk: f64,
    /// Seconds since training started.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub population: usize,
    pub seed: u64,
    /// Where per-epoch checkpoints go; `None` skips writing them.
    pub checkpoint_dir: Option<PathBuf>,
}

impl TrainOptions {
    pub fn new(population: usize, seed: u64) -> Self {
        Self { population, seed, checkpoint_dir: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeFailure {
    pub epoch: usize,
    pub instance_id: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: Policy,
    pub log: Vec<TrainLogRow>,
    pub failures: Vec<EpisodeFailure>,
}

impl TrainOutcome {
    /// Mean episode return of every epoch that completed at least one episode.
    pub fn epoch_mean_returns(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64, usize)> = Vec::new();
        for row in &self.log {
            match out.last_mut() {
                Some((e, sum, n)) if *e == row.epoch => {
                    *sum += row.episode_return;
                    *n += 1;
                }
                _ => out.push((row.epoch, row.episode_return, 1)),
            }
        }
        out.into_iter().map(|(e, s, n)| (e, s / n as f64)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub episode_return: f64,
    pub mean_rc: f64,
    pub mean_rk: f64,
    pub updates: usize,
}

/// Initial policy parameters for a master seed.
pub fn initial_policy(seed: u64) -> Policy {
    Policy::new(seeds::derive_path(seed, &[domain::INIT]))
}

pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch_{epoch:03}.json"))
}

/// Trains a fresh policy for `config.epochs` passes over `train_set`.
pub fn train(train_set: &[MtoInstance], config: &PpoConfig, options: &TrainOptions) -> Result<TrainOutcome> {
    train_from(initial_policy(options.seed), train_set, config, options)
}

/// Continues training `policy`. Each instance gets a fresh run per epoch whose
/// seeds depend only on (master seed, epoch, instance position).
pub fn train_from(
    mut policy: Policy,
    train_set: &[MtoInstance],
    config: &PpoConfig,
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if let Some(dir) = &options.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }
    let start = Instant::now();
    let mut log = Vec::new();
    let mut failures = Vec::new();
    for epoch in 0..config.epochs {
        for (idx, instance) in train_set.iter().enumerate() {
            let path = [epoch as u64, idx as u64];
            let run_seed = seeds::derive_path(options.seed, &[domain::EPISODE, path[0], path[1]]);
            let policy_seed = seeds::derive_path(options.seed, &[domain::POLICY, path[0], path[1]]);
            match run_episode(&mut policy, instance, config, options.population, run_seed, policy_seed) {
                Ok(s) => log.push(TrainLogRow {
                    epoch,
                    instance_id: instance.instance_id.clone(),
                    episode_return: s.episode_return,
                    mean_rc: s.mean_rc,
                    mean_rk: s.mean_rk,
                    wall_time: start.elapsed().as_secs_f64(),
                }),
                Err(e) => {
                    log::warn!("epoch {epoch}, instance {}: episode skipped: {e}", instance.instance_id);
                    failures.push(EpisodeFailure {
                        epoch,
                        instance_id: instance.instance_id.clone(),
                        reason: e.to_string(),
                    });
                }
            }
        }
        if let Some(dir) = &options.checkpoint_dir {
            policy.params.save(checkpoint_path(dir, epoch))?;
        }
        log::info!("epoch {epoch} done after {:.1}s", start.elapsed().as_secs_f64());
    }
    Ok(TrainOutcome { policy, log, failures })
}

/// One sampled episode with PPO updates every `t_ppo` steps and at the end.
pub fn run_episode(
    policy: &mut Policy,
    instance: &MtoInstance,
    config: &PpoConfig,
    population: usize,
    run_seed: u64,
    policy_seed: u64,
) -> Result<EpisodeSummary> {
    let mut state = EmtState::init(instance, EngineConfig::new(population, config.budget), run_seed)?;
    let mut streams = PolicyStreams::new(policy_seed, state.num_tasks());
    let mut buffer: Vec<Transition> = Vec::with_capacity(config.t_ppo);
    let (mut total, mut rc, mut rk) = (0.0, 0.0, 0.0);
    let mut updates = 0;
    let mut steps = 0;
    while !state.is_done() {
        let features = state.features();
        let decision = policy.act(&features, Mode::Sample, &mut streams)?;
        let value = policy.critic_value(&features)?;
        let outcome = state.step(&decision.action)?;
        if !outcome.reward.is_finite() {
            return Err(Error::NonFinite(format!("reward at generation {}", state.generation)));
        }
        total += outcome.reward;
        rc += outcome.convergence_reward.iter().sum::<f64>();
        rk += outcome.transfer_reward.iter().sum::<f64>();
        steps += 1;
        let done = state.is_done();
        buffer.push(Transition {
            features,
            log_prob: decision.action.log_prob,
            action: decision.action,
            reward: outcome.reward,
            value,
            done,
        });
        if buffer.len() == config.t_ppo || done {
            let bootstrap = if done { 0.0 } else { policy.critic_value(&state.features())? };
            let (adv, ret) = compute_advantages(&buffer, bootstrap, config);
            ppo_update(policy, &buffer, &adv, &ret, config)?;
            updates += 1;
            buffer.clear();
        }
    }
    let n = steps.max(1) as f64;
    Ok(EpisodeSummary { episode_return: total, mean_rc: rc / n, mean_rk: rk / n, updates })
}

pub fn write_training_log(path: impl AsRef<Path>, rows: &[TrainLogRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
