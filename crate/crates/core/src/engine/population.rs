use rand::Rng;

use crate::benchmark::SubTask;
use crate::nn::Matrix;

/// One sub-task's population in the unified `[0,1]^D` space.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub positions: Matrix,
    pub fitness: Vec<f64>,
    pub best_value: f64,
    pub best_position: Vec<f64>,
    /// Generations in which the best-so-far value did not improve.
    pub stagnation: usize,
    /// Whether the last generation improved the best-so-far value.
    pub improved: bool,
    pub generation: usize,
}

impl Population {
    /// Uniform positions, drawn row by row.
    pub fn random<R: Rng + ?Sized>(task: &SubTask, size: usize, rng: &mut R) -> Self {
        let dim = task.dim();
        let data = (0..size * dim).map(|_| rng.random::<f64>()).collect();
        let positions = Matrix::from_vec(size, dim, data).expect("shape");
        Self::from_positions(task, positions)
    }

    pub fn from_positions(task: &SubTask, positions: Matrix) -> Self {
        let fitness: Vec<f64> = (0..positions.rows()).map(|i| task.evaluate(positions.row(i))).collect();
        let best = argmin(&fitness);
        Self {
            best_value: fitness[best],
            best_position: positions.row(best).to_vec(),
            positions,
            fitness,
            stagnation: 0,
            improved: false,
            generation: 0,
        }
    }

    pub fn size(&self) -> usize {
        self.positions.rows()
    }

    pub fn dim(&self) -> usize {
        self.positions.cols()
    }

    pub fn individual(&self, i: usize) -> &[f64] {
        self.positions.row(i)
    }

    /// Index of the current best member (lowest index on ties).
    pub fn best_index(&self) -> usize {
        argmin(&self.fitness)
    }

    /// Indices of the `count` best members, best first, ties by index.
    pub fn elite_indices(&self, count: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.size()).collect();
        idx.sort_by(|&a, &b| self.fitness[a].total_cmp(&self.fitness[b]).then(a.cmp(&b)));
        idx.truncate(count);
        idx
    }

    pub fn current_best(&self) -> f64 {
        self.fitness.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn current_worst(&self) -> f64 {
        self.fitness.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Pairwise survival: offspring `i` replaces parent `i` iff it is no
    /// worse. Returns the survivor mask and updates the best-so-far record
    /// and stagnation counter.
    pub fn greedy_select(&mut self, offspring: &Matrix, offspring_fitness: &[f64]) -> Vec<bool> {
        assert_eq!(offspring.rows(), self.size(), "one offspring per parent");
        let mut survived = vec![false; self.size()];
        for i in 0..self.size() {
            if offspring_fitness[i] <= self.fitness[i] {
                self.positions.row_mut(i).copy_from_slice(offspring.row(i));
                self.fitness[i] = offspring_fitness[i];
                survived[i] = true;
            }
        }
        let best = self.best_index();
        self.improved = self.fitness[best] < self.best_value;
        if self.improved {
            self.best_value = self.fitness[best];
            self.best_position = self.positions.row(best).to_vec();
        } else {
            self.stagnation += 1;
        }
        self.generation += 1;
        survived
    }
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::BasicFunction;

    fn pop(rows: &[Vec<f64>]) -> (SubTask, Population) {
        let task = SubTask::plain(BasicFunction::Sphere, rows[0].len());
        let p = Population::from_positions(&task, Matrix::from_rows(rows).unwrap());
        (task, p)
    }

    #[test]
    fn worse_offspring_leave_population_and_count_stagnation() {
        let (task, mut p) = pop(&[vec![0.5, 0.5], vec![0.6, 0.4], vec![0.1, 0.9]]);
        let before = p.clone();
        let off = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let fit: Vec<f64> = (0..3).map(|i| task.evaluate(off.row(i))).collect();
        let survived = p.greedy_select(&off, &fit);
        assert_eq!(survived, vec![false; 3]);
        assert_eq!(p.positions, before.positions);
        assert_eq!(p.stagnation, 1);
        assert!(!p.improved);
    }

    #[test]
    fn ties_keep_offspring() {
        let (task, mut p) = pop(&[vec![0.4, 0.5], vec![0.9, 0.9]]);
        // mirror image through the center has the same sphere value
        let off = Matrix::from_rows(&[vec![0.6, 0.5], vec![1.0, 1.0]]).unwrap();
        let fit: Vec<f64> = (0..2).map(|i| task.evaluate(off.row(i))).collect();
        assert_eq!(fit[0], p.fitness[0]);
        let survived = p.greedy_select(&off, &fit);
        assert_eq!(survived, vec![true, false]);
        assert_eq!(p.individual(0), &[0.6, 0.5]);
        // equal best value is not an improvement
        assert!(!p.improved);
        assert_eq!(p.stagnation, 1);
    }

    #[test]
    fn elites_sorted_by_fitness() {
        let (_, p) = pop(&[vec![0.9, 0.9], vec![0.5, 0.5], vec![0.6, 0.5], vec![0.4, 0.5]]);
        assert_eq!(p.elite_indices(3), vec![1, 2, 3]);
        assert_eq!(p.best_index(), 1);
    }
}
