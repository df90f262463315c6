//! The controller network and its action sampling.
//!
//! Data flow for K tasks:
//!
//! ```text
//! features K×5 ─embed→ e K×64 ─attention→ scores K×K, decision K×64 (batch-normed)
//! scores ─route→ source[j]
//! [decision[j] ‖ decision[source[j]]] K×128 ─┬─ knowledge-control head → μ_kc ∈ [0, 0.5]
//!                                            ├─ operator head → 4 logits
//!                                            ├─ mutation head → μ_F ∈ [0, 1]
//!                                            └─ crossover head → μ_Cr ∈ [0, 1]
//! ```
//!
//! The critic has its own embedder and reads the task-mean embedding.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::engine::{ActionBundle, ActionMeans, StateFeatures, TransferOperator, NUM_FEATURES};
use crate::error::{Error, Result};
use crate::nn::{self, Matrix, ParamSet, Tape, Var};
use crate::seeds::{self, domain};

pub const EMBED_DIM: usize = 64;
pub const HIDDEN_DIM: usize = 64;
/// Standard deviation of every Gaussian action head.
pub const ACTION_STD: f64 = 0.1;
pub const MAX_TRANSFER_RATE: f64 = 0.5;

const EMBED: &str = "embed";
const ROUTE: &str = "route";
const ROUTE_NORM: &str = "route.norm";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Draw every action from its distribution.
    Sample,
    /// Argmax for discrete heads, the mean for Gaussian heads.
    Deterministic,
}

/// The 1-output MLP heads with a bounded mean `offset + scale·tanh(·)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GaussianHead {
    Knowledge,
    Mutation,
    Crossover,
}

impl GaussianHead {
    fn prefix(self) -> &'static str {
        match self {
            Self::Knowledge => "kc",
            Self::Mutation => "mutation",
            Self::Crossover => "crossover",
        }
    }

    /// `(offset, scale, upper bound)`; the lower bound is always 0.
    fn affine(self) -> (f64, f64, f64) {
        match self {
            Self::Knowledge => (0.25, 0.25, MAX_TRANSFER_RATE),
            Self::Mutation | Self::Crossover => (0.5, 0.5, 1.0),
        }
    }
}

/// Replacement values for ablated heads. A replaced head is not evaluated
/// for sampling and contributes nothing to the log-probability.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub source: Option<Vec<usize>>,
    pub transfer_rate: Option<Vec<f64>>,
    pub operator: Option<Vec<TransferOperator>>,
    pub f: Option<Vec<f64>>,
    pub cr: Option<Vec<f64>>,
}

impl Overrides {
    pub fn none() -> Self {
        Self::default()
    }
}

/// Per-task random streams for action sampling.
#[derive(Debug, Clone)]
pub struct PolicyStreams(Vec<ChaCha8Rng>);

impl PolicyStreams {
    pub fn new(seed: u64, tasks: usize) -> Self {
        Self((0..tasks).map(|j| seeds::rng_from(seeds::derive_path(seed, &[domain::POLICY, j as u64]))).collect())
    }

    pub fn from_streams(streams: Vec<ChaCha8Rng>) -> Self {
        Self(streams)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Streams reordered so that new stream `i` is old stream `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self(order.iter().map(|&i| self.0[i].clone()).collect())
    }

    fn task(&mut self, j: usize) -> &mut ChaCha8Rng {
        &mut self.0[j]
    }
}

/// Intermediate tensors of one forward pass, kept for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionContext {
    /// Task embeddings, `K×64`.
    pub e: Matrix,
    /// Pre-softmax attention scores before self-masking, `K×K`.
    pub h_score: Matrix,
    /// Batch-normed attention output, `K×64`.
    pub h_decision: Matrix,
    /// Pair-concatenated decision rows, `K×128`.
    pub h_concat: Matrix,
    pub operator_probs: Matrix,
}

#[derive(Debug, Clone)]
pub struct Decision {
    pub action: ActionBundle,
    pub context: DecisionContext,
}

/// Log-probability (and categorical entropy) of a stored action.
#[derive(Debug, Clone, Copy)]
pub struct ActionDensity {
    pub log_prob: Var,
    pub entropy: Var,
}

/// Parameters of the controller and its critic.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub params: ParamSet,
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left `u` above the running sum: take the last positive entry
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Lowest index attaining the maximum, skipping `skip`.
fn argmax_excluding(row: &[f64], skip: Option<usize>) -> usize {
    let mut best: Option<usize> = None;
    for (i, &v) in row.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        if best.is_none_or(|b| v > row[b]) {
            best = Some(i);
        }
    }
    best.expect("at least one candidate")
}

/// Softmax over a score row with the target's own entry removed (its
/// probability is exactly 0).
pub fn routing_probabilities(scores: &Matrix, target: usize) -> Vec<f64> {
    let row = scores.row(target);
    let max = row
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = row
        .iter()
        .enumerate()
        .map(|(i, &v)| if i == target { 0.0 } else { (v - max).exp() })
        .collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

/// Picks a source for every target from the score matrix; self entries are
/// excluded. Returns the sources and the summed log-probability.
pub fn route(scores: &Matrix, mode: Mode, streams: &mut PolicyStreams) -> (Vec<usize>, f64) {
    let k = scores.rows();
    let mut log_prob = 0.0;
    let source = (0..k)
        .map(|j| {
            let probs = routing_probabilities(scores, j);
            let pick = match mode {
                Mode::Deterministic => argmax_excluding(scores.row(j), Some(j)),
                Mode::Sample => sample_categorical(&probs, streams.task(j)),
            };
            log_prob += probs[pick].ln();
            pick
        })
        .collect();
    (source, log_prob)
}

impl Policy {
    /// Fresh parameters: dense weights `U[±1/√fan_in]`, batch-norm scale 1 and offset 0.
    pub fn new(seed: u64) -> Self {
        let mut rng = seeds::rng_from(seed);
        let mut p = ParamSet::new();
        nn::init_dense(&mut p, EMBED, NUM_FEATURES, EMBED_DIM, &mut rng);
        nn::init_attention(&mut p, ROUTE, EMBED_DIM, &mut rng);
        nn::init_batch_norm(&mut p, ROUTE_NORM, EMBED_DIM);
        for head in [GaussianHead::Knowledge, GaussianHead::Mutation, GaussianHead::Crossover] {
            nn::init_dense(&mut p, &format!("{}.hidden", head.prefix()), 2 * EMBED_DIM, HIDDEN_DIM, &mut rng);
            nn::init_dense(&mut p, &format!("{}.out", head.prefix()), HIDDEN_DIM, 1, &mut rng);
        }
        nn::init_dense(&mut p, "op.hidden", 2 * EMBED_DIM, HIDDEN_DIM, &mut rng);
        nn::init_dense(&mut p, "op.out", HIDDEN_DIM, TransferOperator::ALL.len(), &mut rng);
        nn::init_dense(&mut p, "critic.embed", NUM_FEATURES, EMBED_DIM, &mut rng);
        nn::init_dense(&mut p, "critic.hidden", EMBED_DIM, HIDDEN_DIM, &mut rng);
        nn::init_dense(&mut p, "critic.out", HIDDEN_DIM, 1, &mut rng);
        Self { params: p }
    }

    pub fn from_params(params: ParamSet) -> Self {
        Self { params }
    }

    fn check_tasks(features: &StateFeatures) -> Result<()> {
        if features.num_tasks() < 2 {
            return Err(Error::InvalidInstance(format!("need at least 2 tasks, got {}", features.num_tasks())));
        }
        if features.matrix().cols() != NUM_FEATURES {
            return Err(Error::Dimension(format!("expected {NUM_FEATURES} features per task")));
        }
        Ok(())
    }

    /// Shared linear embedding of every task's features, `K×64`.
    pub fn embed(&self, tape: &mut Tape, features: &StateFeatures) -> Result<Var> {
        Self::check_tasks(features)?;
        let x = tape.constant(features.matrix().clone());
        nn::dense(tape, &self.params, EMBED, x)
    }

    /// Attention block: pre-softmax scores and the batch-normed output.
    pub fn tr_forward(&self, tape: &mut Tape, embedding: Var) -> Result<(Var, Var)> {
        let (scores, attended) = nn::single_head_attention(tape, &self.params, ROUTE, embedding)?;
        let decision = nn::batch_norm(tape, &self.params, ROUTE_NORM, attended)?;
        Ok((scores, decision))
    }

    /// Row `j` is `[decision[j] ‖ decision[source[j]]]`.
    pub fn pair_concat(tape: &mut Tape, decision: Var, source: &[usize]) -> Result<Var> {
        let partner = tape.gather_rows(decision, source)?;
        tape.concat_cols(decision, partner)
    }

    fn mlp(&self, tape: &mut Tape, prefix: &str, x: Var) -> Result<Var> {
        let h = nn::dense(tape, &self.params, &format!("{prefix}.hidden"), x)?;
        let h = tape.relu(h);
        nn::dense(tape, &self.params, &format!("{prefix}.out"), h)
    }

    fn gaussian_mean(&self, tape: &mut Tape, head: GaussianHead, concat: Var) -> Result<Var> {
        let (offset, scale, _) = head.affine();
        let raw = self.mlp(tape, head.prefix(), concat)?;
        let squashed = tape.tanh(raw);
        let scaled = tape.scale(squashed, scale);
        Ok(tape.add_scalar(scaled, offset))
    }

    /// Knowledge-control mean `0.25 + 0.25·tanh(MLP(h))`, `K×1`.
    pub fn kc_mean(&self, tape: &mut Tape, concat: Var) -> Result<Var> {
        self.gaussian_mean(tape, GaussianHead::Knowledge, concat)
    }

    /// Mutation-strength mean `0.5 + 0.5·tanh(MLP(h))`, `K×1`.
    pub fn f_mean(&self, tape: &mut Tape, concat: Var) -> Result<Var> {
        self.gaussian_mean(tape, GaussianHead::Mutation, concat)
    }

    /// Crossover-rate mean `0.5 + 0.5·tanh(MLP(h))`, `K×1`.
    pub fn cr_mean(&self, tape: &mut Tape, concat: Var) -> Result<Var> {
        self.gaussian_mean(tape, GaussianHead::Crossover, concat)
    }

    /// Operator logits (ReLU output layer), `K×4`.
    pub fn op_logits(&self, tape: &mut Tape, concat: Var) -> Result<Var> {
        let out = self.mlp(tape, "op", concat)?;
        Ok(tape.relu(out))
    }

    /// State value: MLP over the task-mean of a separate embedding.
    pub fn critic(&self, tape: &mut Tape, features: &StateFeatures) -> Result<Var> {
        Self::check_tasks(features)?;
        let x = tape.constant(features.matrix().clone());
        let e = nn::dense(tape, &self.params, "critic.embed", x)?;
        let pooled = tape.mean_rows(e);
        let h = nn::dense(tape, &self.params, "critic.hidden", pooled)?;
        let h = tape.relu(h);
        nn::dense(tape, &self.params, "critic.out", h)
    }

    pub fn critic_value(&self, features: &StateFeatures) -> Result<f64> {
        let mut tape = Tape::new();
        let v = self.critic(&mut tape, features)?;
        Ok(tape.value(v).item())
    }

    pub fn act(&self, features: &StateFeatures, mode: Mode, streams: &mut PolicyStreams) -> Result<Decision> {
        self.act_with(features, mode, streams, &Overrides::none())
    }

    /// Full forward pass producing one [`ActionBundle`]. Each task samples
    /// from its own stream in the order routing, knowledge control,
    /// operator, F, Cr; deterministic mode draws nothing.
    pub fn act_with(
        &self,
        features: &StateFeatures,
        mode: Mode,
        streams: &mut PolicyStreams,
        overrides: &Overrides,
    ) -> Result<Decision> {
        let k = features.num_tasks();
        if streams.len() != k {
            return Err(Error::Dimension(format!("{} policy streams for {k} tasks", streams.len())));
        }
        let mut tape = Tape::new();
        let e = self.embed(&mut tape, features)?;
        let (scores, decision) = self.tr_forward(&mut tape, e)?;

        let source = match &overrides.source {
            Some(s) => s.clone(),
            None => route(tape.value(scores), mode, streams).0,
        };
        let concat = Self::pair_concat(&mut tape, decision, &source)?;

        let draw_gaussian = |head: GaussianHead, means: &Matrix, streams: &mut PolicyStreams| -> Vec<f64> {
            let (_, _, upper) = head.affine();
            (0..k)
                .map(|j| {
                    let mu = means[(j, 0)];
                    match mode {
                        Mode::Deterministic => mu,
                        Mode::Sample => {
                            let normal = Normal::new(mu, ACTION_STD).expect("finite mean");
                            normal.sample(streams.task(j)).clamp(0.0, upper)
                        }
                    }
                })
                .collect()
        };

        let kc_mu = self.kc_mean(&mut tape, concat)?;
        let kc_mu_m = tape.value(kc_mu).clone();
        let transfer_rate = match &overrides.transfer_rate {
            Some(v) => v.clone(),
            None => draw_gaussian(GaussianHead::Knowledge, &kc_mu_m, streams),
        };

        let logits = self.op_logits(&mut tape, concat)?;
        let probs = nn::tape::softmax_rows(tape.value(logits));
        let operator = match &overrides.operator {
            Some(v) => v.clone(),
            None => (0..k)
                .map(|j| {
                    let i = match mode {
                        Mode::Deterministic => argmax_excluding(probs.row(j), None),
                        Mode::Sample => sample_categorical(probs.row(j), streams.task(j)),
                    };
                    TransferOperator::from_index(i).expect("4 operators")
                })
                .collect(),
        };

        let f_mu = self.f_mean(&mut tape, concat)?;
        let f_mu_m = tape.value(f_mu).clone();
        let f = match &overrides.f {
            Some(v) => v.clone(),
            None => draw_gaussian(GaussianHead::Mutation, &f_mu_m, streams),
        };
        let cr_mu = self.cr_mean(&mut tape, concat)?;
        let cr_mu_m = tape.value(cr_mu).clone();
        let cr = match &overrides.cr {
            Some(v) => v.clone(),
            None => draw_gaussian(GaussianHead::Crossover, &cr_mu_m, streams),
        };

        let mut action = ActionBundle {
            source,
            transfer_rate,
            operator,
            f,
            cr,
            log_prob: 0.0,
            means: Some(ActionMeans {
                transfer_rate: kc_mu_m.data().to_vec(),
                f: f_mu_m.data().to_vec(),
                cr: cr_mu_m.data().to_vec(),
            }),
        };
        let density = self.density_from_parts(&mut tape, scores, HeadOutputs { kc: kc_mu, logits, f: f_mu, cr: cr_mu }, &action, overrides)?;
        action.log_prob = tape.value(density.log_prob).item();

        let context = DecisionContext {
            e: tape.value(e).clone(),
            h_score: tape.value(scores).clone(),
            h_decision: tape.value(decision).clone(),
            h_concat: tape.value(concat).clone(),
            operator_probs: probs,
        };
        Ok(Decision { action, context })
    }

    /// Rebuilds the policy on `tape` and returns the log-density of a stored
    /// action under the current parameters.
    pub fn action_density(
        &self,
        tape: &mut Tape,
        features: &StateFeatures,
        action: &ActionBundle,
        overrides: &Overrides,
    ) -> Result<ActionDensity> {
        let e = self.embed(tape, features)?;
        let (scores, decision) = self.tr_forward(tape, e)?;
        let concat = Self::pair_concat(tape, decision, &action.source)?;
        let kc = self.kc_mean(tape, concat)?;
        let logits = self.op_logits(tape, concat)?;
        let f = self.f_mean(tape, concat)?;
        let cr = self.cr_mean(tape, concat)?;
        self.density_from_parts(tape, scores, HeadOutputs { kc, logits, f, cr }, action, overrides)
    }

    fn density_from_parts(
        &self,
        tape: &mut Tape,
        scores: Var,
        heads: HeadOutputs,
        action: &ActionBundle,
        overrides: &Overrides,
    ) -> Result<ActionDensity> {
        let k = action.num_tasks();
        let mut terms: Vec<Var> = Vec::new();
        let mut entropies: Vec<Var> = Vec::new();

        let categorical = |tape: &mut Tape, logits: Var, picks: &[usize]| -> Result<(Var, Var)> {
            let logp = tape.log_softmax_rows(logits);
            let picked = tape.pick_per_row(logp, picks)?;
            let p = tape.exp(logp);
            let plogp = tape.mul(p, logp)?;
            let neg_entropy = tape.sum(plogp);
            Ok((tape.sum(picked), tape.scale(neg_entropy, -1.0)))
        };

        if overrides.source.is_none() {
            let masked = tape.mask_diagonal(scores)?;
            let (lp, ent) = categorical(tape, masked, &action.source)?;
            terms.push(lp);
            entropies.push(ent);
        }
        if overrides.operator.is_none() {
            let picks: Vec<usize> = action.operator.iter().map(|o| o.index()).collect();
            let (lp, ent) = categorical(tape, heads.logits, &picks)?;
            terms.push(lp);
            entropies.push(ent);
        }
        let gaussians = [
            (heads.kc, &action.transfer_rate, overrides.transfer_rate.is_none()),
            (heads.f, &action.f, overrides.f.is_none()),
            (heads.cr, &action.cr, overrides.cr.is_none()),
        ];
        for (mean, values, active) in gaussians {
            if !active {
                continue;
            }
            let x = tape.constant(Matrix::from_vec(k, 1, values.clone())?);
            let diff = tape.sub(x, mean)?;
            let z = tape.scale(diff, 1.0 / ACTION_STD);
            let z2 = tape.square(z);
            let sum = tape.sum(z2);
            let quad = tape.scale(sum, -0.5);
            let norm = -(k as f64) * (ACTION_STD.ln() + 0.5 * (2.0 * PI).ln());
            terms.push(tape.add_scalar(quad, norm));
        }

        let zero = tape.constant(Matrix::scalar(0.0));
        let mut log_prob = zero;
        for t in terms {
            log_prob = tape.add(log_prob, t)?;
        }
        let mut entropy = zero;
        for t in entropies {
            entropy = tape.add(entropy, t)?;
        }
        Ok(ActionDensity { log_prob, entropy })
    }
}

#[derive(Debug, Clone, Copy)]
struct HeadOutputs {
    kc: Var,
    logits: Var,
    f: Var,
    cr: Var,
}
