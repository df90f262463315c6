use serde::{Deserialize, Serialize};

use super::PpoConfig;
use crate::engine::{ActionBundle, StateFeatures};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, Matrix, Tape, Var};
use crate::policy::{Overrides, Policy};

/// One environment step as stored in the rollout buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub features: StateFeatures,
    pub action: ActionBundle,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    pub done: bool,
}

/// Generalized advantage estimates and value targets for one contiguous
/// segment. `bootstrap` is the critic value of the state following the last
/// transition and is ignored when that transition is terminal.
///
/// Returns are raw advantages plus values; the advantages themselves are then
/// normalized to zero mean and unit variance when the segment has at least
/// two steps.
pub fn compute_advantages(buffer: &[Transition], bootstrap: f64, config: &PpoConfig) -> (Vec<f64>, Vec<f64>) {
    let raw = gae(buffer, bootstrap, config.gamma, config.gae_lambda);
    let returns = raw.iter().zip(buffer).map(|(a, t)| a + t.value).collect();
    (normalize(raw), returns)
}

/// Un-normalized GAE(γ, λ).
pub fn gae(buffer: &[Transition], bootstrap: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let mut out = vec![0.0; buffer.len()];
    let mut next_value = bootstrap;
    let mut running = 0.0;
    for (i, t) in buffer.iter().enumerate().rev() {
        let live = if t.done { 0.0 } else { 1.0 };
        let delta = t.reward + gamma * next_value * live - t.value;
        running = delta + gamma * lambda * live * running;
        out[i] = running;
        next_value = t.value;
    }
    out
}

fn normalize(mut adv: Vec<f64>) -> Vec<f64> {
    if adv.len() < 2 {
        return adv;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-12 {
        adv.iter_mut().for_each(|a| *a -= mean);
    } else {
        adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
    }
    adv
}

/// Scalar nodes of the PPO objective, each averaged over the segment.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub surrogate: Var,
    pub value: Var,
    pub entropy: Var,
}

/// Builds the clipped-surrogate objective on `tape` by re-evaluating the
/// policy on the stored features and actions.
pub fn ppo_loss(
    tape: &mut Tape,
    policy: &Policy,
    buffer: &[Transition],
    advantages: &[f64],
    returns: &[f64],
    config: &PpoConfig,
) -> Result<LossTerms> {
    if buffer.is_empty() || advantages.len() != buffer.len() || returns.len() != buffer.len() {
        return Err(Error::Contract("segment, advantages and returns must be non-empty and aligned".into()));
    }
    let n = buffer.len() as f64;
    let mut surrogate = tape.constant(Matrix::scalar(0.0));
    let mut value = surrogate;
    let mut entropy = surrogate;
    for (i, t) in buffer.iter().enumerate() {
        let density = policy.action_density(tape, &t.features, &t.action, &Overrides::none())?;
        let shifted = tape.add_scalar(density.log_prob, -t.log_prob);
        let ratio = tape.exp(shifted);
        let clipped = tape.clamp(ratio, 1.0 - config.clip_eps, 1.0 + config.clip_eps);
        let a = advantages[i];
        let plain = tape.scale(ratio, a);
        let bounded = tape.scale(clipped, a);
        let term = tape.minimum(plain, bounded)?;
        surrogate = tape.add(surrogate, term)?;

        let v = policy.critic(tape, &t.features)?;
        let err = tape.add_scalar(v, -returns[i]);
        let sq = tape.square(err);
        value = tape.add(value, sq)?;
        entropy = tape.add(entropy, density.entropy)?;
    }
    let surrogate = tape.scale(surrogate, 1.0 / n);
    let value = tape.scale(value, 1.0 / n);
    let entropy = tape.scale(entropy, 1.0 / n);
    let policy_part = tape.scale(surrogate, -1.0);
    let value_part = tape.scale(value, config.value_coef);
    let entropy_part = tape.scale(entropy, -config.entropy_coef);
    let total = tape.add(policy_part, value_part)?;
    let total = tape.add(total, entropy_part)?;
    Ok(LossTerms { total, surrogate, value, entropy })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossStats {
    pub total: f64,
    pub surrogate: f64,
    pub value: f64,
    pub entropy: f64,
}

/// Loss values of every inner pass, in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UpdateStats {
    pub passes: Vec<LossStats>,
}

pub fn evaluate_loss(
    policy: &Policy,
    buffer: &[Transition],
    advantages: &[f64],
    returns: &[f64],
    config: &PpoConfig,
) -> Result<LossStats> {
    let mut tape = Tape::new();
    let terms = ppo_loss(&mut tape, policy, buffer, advantages, returns, config)?;
    Ok(stats(&tape, terms))
}

fn stats(tape: &Tape, t: LossTerms) -> LossStats {
    LossStats {
        total: tape.value(t.total).item(),
        surrogate: tape.value(t.surrogate).item(),
        value: tape.value(t.value).item(),
        entropy: tape.value(t.entropy).item(),
    }
}

/// `k_ppo` Adam steps on the segment. A non-finite loss or gradient on any
/// pass aborts the update and restores the parameters held on entry.
pub fn ppo_update(
    policy: &mut Policy,
    buffer: &[Transition],
    advantages: &[f64],
    returns: &[f64],
    config: &PpoConfig,
) -> Result<UpdateStats> {
    let snapshot = policy.params.clone();
    let mut out = UpdateStats::default();
    for pass in 0..config.k_ppo {
        let mut tape = Tape::new();
        let terms = ppo_loss(&mut tape, policy, buffer, advantages, returns, config)?;
        let s = stats(&tape, terms);
        if ![s.total, s.surrogate, s.value, s.entropy].iter().all(|v| v.is_finite()) {
            policy.params = snapshot;
            return Err(Error::NonFinite(format!("PPO loss on pass {pass}: {s:?}")));
        }
        tape.backward(terms.total, &mut policy.params)?;
        if !policy.params.grad_norm().is_finite() {
            policy.params = snapshot;
            return Err(Error::NonFinite(format!("PPO gradient on pass {pass}")));
        }
        policy.params.adam_step(config.learning_rate, AdamConfig::default());
        out.passes.push(s);
    }
    Ok(out)
}
