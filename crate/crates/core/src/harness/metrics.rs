use serde::{Deserialize, Serialize};

use crate::engine::TransferCount;

const DEGENERATE: f64 = 1e-12;

/// One run's normalized gap `(f^G − f*)/(f^0 − f*)`, clamped to [0, 1].
/// A degenerate normalizer gives 0 when the run sits at the optimum and 1
/// otherwise.
pub fn perf_ratio(final_best: f64, initial_best: f64, optimum: f64) -> f64 {
    let denom = initial_best - optimum;
    if denom.abs() < DEGENERATE {
        return if final_best == optimum { 0.0 } else { 1.0 };
    }
    let raw = (final_best - optimum) / denom;
    if !(0.0..=1.0).contains(&raw) {
        log::warn!("normalized gap {raw} outside [0, 1] (optimum {optimum} missed?); clamped");
    }
    raw.clamp(0.0, 1.0)
}

/// Mean of [`perf_ratio`] over runs, each given as `(final_best, initial_best)`.
pub fn normalized_perf(runs: &[(f64, f64)], optimum: f64) -> f64 {
    if runs.is_empty() {
        return 1.0;
    }
    runs.iter().map(|&(g, z)| perf_ratio(g, z, optimum)).sum::<f64>() / runs.len() as f64
}

/// Mean over generations of the pooled survival rate of transferred
/// offspring. Generations without any transfer are skipped; a run that never
/// transfers scores 0.
pub fn kt_success_ratio(history: &[Vec<TransferCount>]) -> f64 {
    let ratios: Vec<f64> = history
        .iter()
        .filter_map(|generation| {
            let sent: usize = generation.iter().map(|c| c.transferred).sum();
            let kept: usize = generation.iter().map(|c| c.survived).sum();
            (sent > 0).then(|| kept as f64 / sent as f64)
        })
        .collect();
    if ratios.is_empty() {
        0.0
    } else {
        ratios.iter().sum::<f64>() / ratios.len() as f64
    }
}

/// Outcome of one evaluation run on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub instance_id: String,
    pub run_index: usize,
    /// Normalized gap per task, in [0, 1].
    pub perf_j: Vec<f64>,
    /// Mean of `perf_j`.
    pub perf: f64,
    /// `convergence[g][j]`: best-so-far of task `j` after generation `g`
    /// (row 0 is the initial population).
    pub convergence: Vec<Vec<f64>>,
    pub kt_success_ratio: f64,
}

impl EvaluationResult {
    pub fn new(
        instance_id: String,
        run_index: usize,
        convergence: Vec<Vec<f64>>,
        optima: &[f64],
        history: &[Vec<TransferCount>],
    ) -> Self {
        let first = convergence.first().cloned().unwrap_or_default();
        let last = convergence.last().cloned().unwrap_or_default();
        let perf_j: Vec<f64> = (0..optima.len()).map(|j| perf_ratio(last[j], first[j], optima[j])).collect();
        let perf = perf_j.iter().sum::<f64>() / perf_j.len().max(1) as f64;
        Self { instance_id, run_index, perf_j, perf, convergence, kt_success_ratio: kt_success_ratio(history) }
    }
}
