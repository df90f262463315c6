use rand::seq::index;
use rand_chacha::ChaCha8Rng;

use super::action::ActionBundle;
use super::features::{objective_spread, position_diversity, StateFeatures, NUM_FEATURES};
use super::operators::{self, transfer_count, TransferSpec};
use super::population::Population;
use crate::benchmark::MtoInstance;
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::seeds::{self, domain};

/// Settings of the low-level multitask DE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    pub population: usize,
    /// Generation budget `G`; normalizes the stagnation feature.
    pub budget: usize,
    pub self_f: f64,
    pub self_cr: f64,
    /// Upper bound accepted for transfer proportions.
    pub max_transfer_rate: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            population: 50,
            budget: 250,
            self_f: operators::SELF_F,
            self_cr: operators::SELF_CR,
            max_transfer_rate: 0.5,
        }
    }
}

impl EngineConfig {
    pub fn new(population: usize, budget: usize) -> Self {
        Self { population, budget, ..Self::default() }
    }
}

/// Transfer bookkeeping for one task in one generation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TransferCount {
    pub transferred: usize,
    pub survived: usize,
}

impl TransferCount {
    /// `survived / transferred`, or `None` when nothing was transferred.
    pub fn ratio(self) -> Option<f64> {
        (self.transferred > 0).then(|| self.survived as f64 / self.transferred as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransferLedger {
    /// Counts of the most recent generation, per task.
    pub last: Vec<TransferCount>,
    /// Totals over the run, per task.
    pub total: Vec<TransferCount>,
    /// Every generation's counts, `history[generation][task]`.
    pub history: Vec<Vec<TransferCount>>,
}

impl TransferLedger {
    fn new(tasks: usize) -> Self {
        Self { last: vec![TransferCount::default(); tasks], total: vec![TransferCount::default(); tasks], history: Vec::new() }
    }

    fn record(&mut self, counts: Vec<TransferCount>) {
        for (t, c) in self.total.iter_mut().zip(&counts) {
            t.transferred += c.transferred;
            t.survived += c.survived;
        }
        self.last = counts.clone();
        self.history.push(counts);
    }
}

/// What one generation did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub convergence_reward: Vec<f64>,
    pub transfer_reward: Vec<f64>,
    pub transfers: Vec<TransferCount>,
}

/// Everything a multitask DE run carries between generations.
#[derive(Debug, Clone)]
pub struct EmtState {
    pub instance: MtoInstance,
    pub config: EngineConfig,
    pub populations: Vec<Population>,
    pub ledger: TransferLedger,
    /// Best value of each initial population.
    pub initial_best: Vec<f64>,
    /// Worst value of each initial population.
    pub initial_worst: Vec<f64>,
    pub generation: usize,
    /// Objective evaluations spent on offspring (initialization excluded).
    pub evaluations: usize,
    task_rngs: Vec<ChaCha8Rng>,
}

/// Seed of task `j`'s random stream for a run seeded with `run_seed`.
pub fn task_stream_seed(run_seed: u64, task: usize) -> u64 {
    seeds::derive_path(run_seed, &[domain::TASK, task as u64])
}

impl EmtState {
    /// Uniform initial populations. Task `j` draws from its own stream,
    /// seeded by [`task_stream_seed`], for the whole run.
    pub fn init(instance: &MtoInstance, config: EngineConfig, run_seed: u64) -> Result<Self> {
        if config.population < 4 {
            return Err(Error::Config(format!(
                "population size {} is below the DE minimum of 4",
                config.population
            )));
        }
        if config.budget == 0 {
            return Err(Error::Config("generation budget must be positive".into()));
        }
        instance.validate()?;
        let k = instance.num_tasks();
        let mut task_rngs: Vec<ChaCha8Rng> = (0..k).map(|j| seeds::rng_from(task_stream_seed(run_seed, j))).collect();
        let populations: Vec<Population> = instance
            .sub_tasks
            .iter()
            .zip(task_rngs.iter_mut())
            .map(|(task, rng)| Population::random(task, config.population, rng))
            .collect();
        Ok(Self {
            initial_best: populations.iter().map(Population::current_best).collect(),
            initial_worst: populations.iter().map(Population::current_worst).collect(),
            instance: instance.clone(),
            config,
            populations,
            ledger: TransferLedger::new(k),
            generation: 0,
            evaluations: 0,
            task_rngs,
        })
    }

    pub fn num_tasks(&self) -> usize {
        self.populations.len()
    }

    pub fn is_done(&self) -> bool {
        self.generation >= self.config.budget
    }

    pub fn best_so_far(&self) -> Vec<f64> {
        self.populations.iter().map(|p| p.best_value).collect()
    }

    pub fn features(&self) -> StateFeatures {
        let k = self.num_tasks();
        let mut m = Matrix::zeros(k, NUM_FEATURES);
        for (j, pop) in self.populations.iter().enumerate() {
            let optimum = self.instance.sub_tasks[j].optimum_value();
            m[(j, 0)] = position_diversity(pop);
            m[(j, 1)] = objective_spread(pop, optimum, self.initial_worst[j]);
            m[(j, 2)] = (pop.stagnation as f64 / self.config.budget as f64).min(1.0);
            m[(j, 3)] = if pop.improved { 1.0 } else { 0.0 };
            m[(j, 4)] = self.ledger.last[j].ratio().unwrap_or(0.0);
        }
        StateFeatures(m)
    }

    /// One generation: transfer offspring for a random subset of hosts, DE
    /// offspring for the rest, evaluation, pairwise selection and reward.
    pub fn step(&mut self, action: &ActionBundle) -> Result<StepOutcome> {
        let k = self.num_tasks();
        action.validate(k, self.config.max_transfer_rate)?;
        let n = self.config.population;

        let mut offspring = Vec::with_capacity(k);
        let mut from_transfer = Vec::with_capacity(k);
        for j in 0..k {
            let rng = &mut self.task_rngs[j];
            let target = &self.populations[j];
            let source = &self.populations[action.source[j]];
            let m_kt = transfer_count(action.transfer_rate[j], n);
            let mut is_host = vec![false; n];
            let mut kids: Vec<Option<Vec<f64>>> = vec![None; n];
            if m_kt > 0 {
                let hosts = index::sample(rng, n, m_kt).into_vec();
                let transfer = TransferSpec { operator: action.operator[j], f: action.f[j], cr: action.cr[j] };
                let children = operators::transfer_evolve(target, source, &hosts, transfer, rng);
                for (h, child) in hosts.into_iter().zip(children) {
                    is_host[h] = true;
                    kids[h] = Some(child);
                }
            }
            let parents: Vec<usize> = (0..n).filter(|&i| !is_host[i]).collect();
            let children = operators::self_evolve(target, &parents, self.config.self_f, self.config.self_cr, rng);
            for (i, child) in parents.into_iter().zip(children) {
                kids[i] = Some(child);
            }
            let data: Vec<f64> = kids.into_iter().flat_map(|c| c.expect("every parent has one child")).collect();
            offspring.push(Matrix::from_vec(n, target.dim(), data)?);
            from_transfer.push(is_host);
        }

        let before = self.best_so_far();
        let mut transfers = Vec::with_capacity(k);
        for j in 0..k {
            let task = &self.instance.sub_tasks[j];
            let kids = &offspring[j];
            let fitness: Vec<f64> = (0..n).map(|i| task.evaluate(kids.row(i))).collect();
            self.evaluations += n;
            let survived = self.populations[j].greedy_select(kids, &fitness);
            let transferred = from_transfer[j].iter().filter(|&&t| t).count();
            let kept = survived.iter().zip(&from_transfer[j]).filter(|(s, t)| **s && **t).count();
            transfers.push(TransferCount { transferred, survived: kept });
        }
        self.ledger.record(transfers.clone());
        self.generation += 1;

        let after = self.best_so_far();
        let optima: Vec<f64> = self.instance.sub_tasks.iter().map(|t| t.optimum_value()).collect();
        let (convergence_reward, transfer_reward) =
            reward_terms(&before, &after, &self.initial_best, &optima, &transfers);
        let reward = convergence_reward.iter().sum::<f64>() + transfer_reward.iter().sum::<f64>();
        Ok(StepOutcome { reward, convergence_reward, transfer_reward, transfers })
    }
}

/// Per-task reward terms: normalized best-so-far improvement
/// `(f_t − f_{t+1}) / (f_0 − f*)` and transfer survival rate.
pub fn reward_terms(
    before: &[f64],
    after: &[f64],
    initial_best: &[f64],
    optima: &[f64],
    transfers: &[TransferCount],
) -> (Vec<f64>, Vec<f64>) {
    let convergence = (0..before.len())
        .map(|j| {
            let denom = initial_best[j] - optima[j];
            if denom.abs() < 1e-12 {
                0.0
            } else {
                (before[j] - after[j]) / denom
            }
        })
        .collect();
    let transfer = transfers.iter().map(|c| c.ratio().unwrap_or(0.0)).collect();
    (convergence, transfer)
}

/// Sum of both reward terms over all tasks.
pub fn compute_reward(
    before: &[f64],
    after: &[f64],
    initial_best: &[f64],
    optima: &[f64],
    transfers: &[TransferCount],
) -> f64 {
    let (c, k) = reward_terms(before, after, initial_best, optima, transfers);
    c.iter().sum::<f64>() + k.iter().sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::{generate_instance, BasicFunction, ShiftLevel};
    use crate::engine::TransferOperator;

    fn instance(k: usize, d: usize, seed: u64) -> MtoInstance {
        let combo = [BasicFunction::Sphere, BasicFunction::Rastrigin, BasicFunction::Ackley];
        generate_instance("t", &combo, ShiftLevel::S, k, d, &mut seeds::rng_from(seed)).unwrap()
    }

    #[test]
    fn init_contract() {
        let inst = instance(3, 4, 0);
        let s = EmtState::init(&inst, EngineConfig::new(50, 10), 7).unwrap();
        assert_eq!(s.populations.len(), 3);
        for (j, p) in s.populations.iter().enumerate() {
            assert_eq!(p.size(), 50);
            assert_eq!(s.initial_best[j], p.fitness.iter().copied().fold(f64::INFINITY, f64::min));
            assert_eq!(p.best_value, s.initial_best[j]);
        }
        let again = EmtState::init(&inst, EngineConfig::new(50, 10), 7).unwrap();
        assert_eq!(s.populations, again.populations);
        assert!(matches!(EmtState::init(&inst, EngineConfig::new(3, 10), 7), Err(Error::Config(_))));
    }

    #[test]
    fn initial_features() {
        let s = EmtState::init(&instance(3, 4, 1), EngineConfig::new(10, 10), 2).unwrap();
        let f = s.features();
        for j in 0..3 {
            assert_eq!(f.task(j)[2], 0.0);
            assert_eq!(f.task(j)[3], 0.0);
            assert_eq!(f.task(j)[4], 0.0);
        }
        assert!(f.in_range());
    }

    #[test]
    fn reward_examples() {
        let none = [TransferCount::default()];
        assert_eq!(compute_reward(&[5.0], &[5.0], &[10.0], &[0.0], &none), 0.0);
        assert_eq!(compute_reward(&[10.0], &[0.0], &[10.0], &[0.0], &none), 1.0);
        let half = [TransferCount { transferred: 10, survived: 5 }];
        assert_eq!(compute_reward(&[3.0], &[3.0], &[10.0], &[0.0], &half), 0.5);
        // degenerate normalizer
        assert_eq!(compute_reward(&[3.0], &[1.0], &[0.0], &[0.0], &none), 0.0);
    }

    #[test]
    fn self_routing_is_rejected() {
        let mut s = EmtState::init(&instance(2, 3, 3), EngineConfig::new(6, 5), 4).unwrap();
        let mut a = ActionBundle::no_transfer(2);
        a.source[0] = 0;
        assert!(matches!(s.step(&a), Err(Error::Contract(_))));
    }

    #[test]
    fn step_accounting() {
        let mut s = EmtState::init(&instance(3, 4, 5), EngineConfig::new(20, 10), 6).unwrap();
        let action = ActionBundle {
            source: vec![1, 2, 0],
            transfer_rate: vec![0.5, 0.2, 0.0],
            operator: vec![TransferOperator::TargetBest, TransferOperator::SourceRand, TransferOperator::SourceBest],
            f: vec![0.5, 0.3, 0.9],
            cr: vec![0.9, 0.1, 0.5],
            log_prob: 0.0,
            means: None,
        };
        let before = s.best_so_far();
        let out = s.step(&action).unwrap();
        assert_eq!(s.evaluations, 60);
        assert_eq!(out.transfers[0].transferred, 10);
        assert_eq!(out.transfers[1].transferred, 4);
        assert_eq!(out.transfers[2].transferred, 0);
        for (c, r) in out.transfers.iter().zip(&out.transfer_reward) {
            assert!(c.survived <= c.transferred);
            assert_eq!(*r, c.ratio().unwrap_or(0.0));
        }
        for (b, a) in before.iter().zip(s.best_so_far()) {
            assert!(a <= *b);
        }
        let f = s.features();
        assert_eq!(f.task(0)[4], out.transfers[0].ratio().unwrap());
        assert_eq!(s.generation, 1);
    }
}
