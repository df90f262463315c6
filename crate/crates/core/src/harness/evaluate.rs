use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::ablation::{AblationVariant, Controller};
use super::metrics::EvaluationResult;
use crate::benchmark::MtoInstance;
use crate::engine::{ActionBundle, EmtState, EngineConfig, StateFeatures};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::policy::{Mode, Policy, PolicyStreams};
use crate::seeds::{self, domain};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub population: usize,
    pub budget: usize,
    pub runs: usize,
    pub seed: u64,
    pub variant: AblationVariant,
    pub mode: Mode,
}

impl EvalSettings {
    /// Deterministic-mode evaluation of the full policy.
    pub fn new(population: usize, budget: usize, runs: usize, seed: u64) -> Self {
        Self { population, budget, runs, seed, variant: AblationVariant::Full, mode: Mode::Deterministic }
    }

    pub fn with_variant(self, variant: AblationVariant) -> Self {
        Self { variant, ..self }
    }
}

/// Seed of run `run` on the instance at position `instance` of the dataset.
pub fn run_seed(master: u64, instance: usize, run: usize) -> u64 {
    seeds::derive_path(master, &[domain::RUN, instance as u64, run as u64])
}

/// One generation as seen by the controller.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub features: StateFeatures,
    pub action: ActionBundle,
    /// Pre-softmax routing scores, when a policy produced the action.
    pub scores: Option<Matrix>,
    pub reward: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub result: EvaluationResult,
    /// Filled only when requested.
    pub steps: Vec<StepRecord>,
}

/// One full run of `G` generations under `variant`.
pub fn evaluate_run(
    policy: Option<&Policy>,
    instance: &MtoInstance,
    settings: &EvalSettings,
    instance_index: usize,
    run: usize,
    record_steps: bool,
) -> Result<RunOutput> {
    let controller = Controller::new(settings.variant, policy, settings.mode)?;
    let seed = run_seed(settings.seed, instance_index, run);
    let mut config = EngineConfig::new(settings.population, settings.budget);
    config.max_transfer_rate = settings.variant.max_transfer_rate();
    let mut state = EmtState::init(instance, config, seed)?;
    let mut streams = PolicyStreams::new(seeds::derive_path(seed, &[domain::POLICY]), state.num_tasks());
    let mut ablation_rng = seeds::rng_from(seeds::derive_path(seed, &[domain::ABLATION]));

    let mut convergence = vec![state.best_so_far()];
    let mut steps = Vec::new();
    while !state.is_done() {
        let features = state.features();
        let out = controller.decide(&features, &mut streams, &mut ablation_rng)?;
        let outcome = state.step(&out.action)?;
        convergence.push(state.best_so_far());
        if record_steps {
            steps.push(StepRecord { features, action: out.action, scores: out.scores, reward: outcome.reward });
        }
    }
    let optima: Vec<f64> = instance.sub_tasks.iter().map(|t| t.optimum_value()).collect();
    let result =
        EvaluationResult::new(instance.instance_id.clone(), run, convergence, &optima, &state.ledger.history);
    Ok(RunOutput { result, steps })
}

/// Every (instance, run) pair, evaluated in parallel; results come back in
/// dataset order, runs ascending.
pub fn evaluate(policy: Option<&Policy>, instances: &[MtoInstance], settings: &EvalSettings) -> Result<Vec<EvaluationResult>> {
    if settings.runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    let jobs: Vec<(usize, usize)> =
        (0..instances.len()).flat_map(|i| (0..settings.runs).map(move |r| (i, r))).collect();
    jobs.par_iter()
        .map(|&(i, r)| evaluate_run(policy, &instances[i], settings, i, r, false).map(|o| o.result))
        .collect()
}

#[derive(Serialize)]
struct ResultRow<'a> {
    instance_id: &'a str,
    run_index: usize,
    variant: &'a str,
    perf: f64,
    kt_success_ratio: f64,
    /// Per-task values joined with ';'.
    perf_j: String,
}

pub const RESULTS_HEADER: &str = "instance_id,run_index,variant,perf,kt_success_ratio,perf_j";
pub const CONVERGENCE_HEADER: &str = "instance_id,run_index,generation,task,best_so_far";

pub fn write_results<W: Write>(out: W, results: &[EvaluationResult], variant: AblationVariant) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        w.serialize(ResultRow {
            instance_id: &r.instance_id,
            run_index: r.run_index,
            variant: variant.name(),
            perf: r.perf,
            kt_success_ratio: r.kt_success_ratio,
            perf_j: r.perf_j.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_convergence<W: Write>(out: W, results: &[EvaluationResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CONVERGENCE_HEADER.split(','))?;
    for r in results {
        for (g, row) in r.convergence.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                w.write_record([r.instance_id.clone(), r.run_index.to_string(), g.to_string(), j.to_string(), v.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Row of a results file as read back for comparison.
#[derive(Debug, Clone, PartialEq, serde::Deserialize)]
pub struct ResultRecord {
    pub instance_id: String,
    pub run_index: usize,
    pub variant: String,
    pub perf: f64,
    pub kt_success_ratio: f64,
    pub perf_j: String,
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
