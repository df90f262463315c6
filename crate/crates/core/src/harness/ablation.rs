use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{ActionBundle, StateFeatures, TransferOperator};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::policy::{Mode, Overrides, Policy, PolicyStreams, MAX_TRANSFER_RATE};

/// Controller used for an evaluation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    /// The unmodified policy.
    Full,
    /// Uniform random source task.
    NoTr,
    /// Transfer rate drawn from U[0, 1].
    NoKc,
    /// Uniform random operator.
    NoOp,
    /// F fixed at 0.5.
    NoF,
    /// Cr fixed at 0.5.
    NoCr,
    /// Every decision drawn uniformly from its range; no network involved.
    RandomAll,
    /// Transfer rate 0 for every task: independent DE.
    NoTransfer,
}

impl AblationVariant {
    pub const ALL: [Self; 8] =
        [Self::Full, Self::NoTr, Self::NoKc, Self::NoOp, Self::NoF, Self::NoCr, Self::RandomAll, Self::NoTransfer];

    /// Variants that replace exactly one policy head.
    pub const SINGLE_HEAD: [Self; 5] = [Self::NoTr, Self::NoKc, Self::NoOp, Self::NoF, Self::NoCr];

    pub fn name(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::NoTr => "no_tr",
            Self::NoKc => "no_kc",
            Self::NoOp => "no_op",
            Self::NoF => "no_f",
            Self::NoCr => "no_cr",
            Self::RandomAll => "random_all",
            Self::NoTransfer => "no_transfer",
        }
    }

    pub fn uses_policy(self) -> bool {
        !matches!(self, Self::RandomAll | Self::NoTransfer)
    }

    /// Upper bound the engine must accept for the transfer rate.
    pub fn max_transfer_rate(self) -> f64 {
        match self {
            Self::NoKc => 1.0,
            _ => MAX_TRANSFER_RATE,
        }
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation variant {s:?}")))
    }
}

/// Uniform source task other than `target`.
fn random_source<R: Rng + ?Sized>(target: usize, tasks: usize, rng: &mut R) -> usize {
    let pick = rng.random_range(0..tasks - 1);
    if pick >= target {
        pick + 1
    } else {
        pick
    }
}

fn random_operator<R: Rng + ?Sized>(rng: &mut R) -> TransferOperator {
    TransferOperator::ALL[rng.random_range(0..TransferOperator::ALL.len())]
}

/// A decision together with the routing scores that produced it, if any.
#[derive(Debug, Clone)]
pub struct ControllerOutput {
    pub action: ActionBundle,
    pub scores: Option<Matrix>,
}

/// Policy (or a stand-in) wrapped with an ablation. Substitutes draw from a
/// separate stream so the remaining heads see the same randomness as in
/// `full`.
#[derive(Debug, Clone)]
pub struct Controller<'a> {
    pub variant: AblationVariant,
    pub policy: Option<&'a Policy>,
    pub mode: Mode,
}

impl<'a> Controller<'a> {
    pub fn new(variant: AblationVariant, policy: Option<&'a Policy>, mode: Mode) -> Result<Self> {
        if variant.uses_policy() && policy.is_none() {
            return Err(Error::Config(format!("variant {variant} needs a policy")));
        }
        Ok(Self { variant, policy, mode })
    }

    /// Head replacements for this variant, drawn from `rng`.
    pub fn overrides(&self, tasks: usize, rng: &mut ChaCha8Rng) -> Overrides {
        let mut o = Overrides::none();
        match self.variant {
            AblationVariant::NoTr => o.source = Some((0..tasks).map(|j| random_source(j, tasks, rng)).collect()),
            AblationVariant::NoKc => o.transfer_rate = Some((0..tasks).map(|_| rng.random::<f64>()).collect()),
            AblationVariant::NoOp => o.operator = Some((0..tasks).map(|_| random_operator(rng)).collect()),
            AblationVariant::NoF => o.f = Some(vec![0.5; tasks]),
            AblationVariant::NoCr => o.cr = Some(vec![0.5; tasks]),
            _ => {}
        }
        o
    }

    pub fn decide(
        &self,
        features: &StateFeatures,
        streams: &mut PolicyStreams,
        rng: &mut ChaCha8Rng,
    ) -> Result<ControllerOutput> {
        let k = features.num_tasks();
        match self.variant {
            AblationVariant::NoTransfer => Ok(ControllerOutput { action: ActionBundle::no_transfer(k), scores: None }),
            AblationVariant::RandomAll => {
                let mut action = ActionBundle::no_transfer(k);
                for j in 0..k {
                    action.source[j] = random_source(j, k, rng);
                    action.transfer_rate[j] = rng.random_range(0.0..=MAX_TRANSFER_RATE);
                    action.operator[j] = random_operator(rng);
                    action.f[j] = rng.random();
                    action.cr[j] = rng.random();
                }
                Ok(ControllerOutput { action, scores: None })
            }
            _ => {
                let policy = self.policy.expect("checked in new");
                let overrides = self.overrides(k, rng);
                let d = policy.act_with(features, self.mode, streams, &overrides)?;
                Ok(ControllerOutput { action: d.action, scores: Some(d.context.h_score) })
            }
        }
    }
}
