use serde::{Deserialize, Serialize};

use super::population::Population;
use crate::nn::Matrix;

pub const NUM_FEATURES: usize = 5;

/// Per-task observation, one row of five features per task:
///
/// 1. mean per-dimension standard deviation of the positions
/// 2. standard deviation of the normalized objective values
/// 3. cumulative stagnation count over the generation budget
/// 4. 1 if the last generation improved the best-so-far value, else 0
/// 5. survival rate of last generation's transferred offspring
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFeatures(pub Matrix);

impl StateFeatures {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn num_tasks(&self) -> usize {
        self.0.rows()
    }

    pub fn task(&self, j: usize) -> &[f64] {
        self.0.row(j)
    }

    /// Rows reordered so that new row `i` is old row `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let rows: Vec<Vec<f64>> = order.iter().map(|&i| self.0.row(i).to_vec()).collect();
        Self(Matrix::from_rows(&rows).expect("rows"))
    }

    pub fn in_range(&self) -> bool {
        (0..self.num_tasks()).all(|j| {
            let s = self.task(j);
            s.iter().all(|v| v.is_finite())
                && [s[0], s[1], s[2], s[4]].iter().all(|v| (0.0..=1.0).contains(v))
                && (s[3] == 0.0 || s[3] == 1.0)
        })
    }
}

/// Mean over dimensions of the population standard deviation (1/N form).
pub fn position_diversity(pop: &Population) -> f64 {
    let (n, d) = (pop.size() as f64, pop.dim());
    let mut total = 0.0;
    for c in 0..d {
        let mean = (0..pop.size()).map(|i| pop.positions[(i, c)]).sum::<f64>() / n;
        let var = (0..pop.size()).map(|i| (pop.positions[(i, c)] - mean).powi(2)).sum::<f64>() / n;
        total += var.sqrt();
    }
    total / d as f64
}

/// Standard deviation of objective values normalized by
/// `(f − f*) / (f_max⁰ − f*)` and clamped to `[0,1]`.
pub fn objective_spread(pop: &Population, optimum: f64, initial_worst: f64) -> f64 {
    let denom = initial_worst - optimum;
    if denom.abs() < 1e-12 {
        return 0.0;
    }
    let normalized: Vec<f64> = pop.fitness.iter().map(|f| ((f - optimum) / denom).clamp(0.0, 1.0)).collect();
    let n = normalized.len() as f64;
    let mean = normalized.iter().sum::<f64>() / n;
    (normalized.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}
