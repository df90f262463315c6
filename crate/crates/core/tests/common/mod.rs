#![allow(dead_code)]

use std::io::Write;

use emtlab_core::benchmark::SubTask;
use emtlab_core::engine::task_stream_seed;
use emtlab_core::seeds;
use rand::Rng;

/// Writes one criterion line straight to stdout so it shows even when the
/// test harness captures output.
pub fn report(name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "[{verdict}] {name}: {detail}");
}

/// Positions and fitness of a population after each generation (index 0 is
/// the initial population).
pub struct DeTrajectory {
    pub positions: Vec<Vec<Vec<f64>>>,
    pub fitness: Vec<Vec<f64>>,
}

/// Textbook DE/rand/1/bin with greedy selection on one task, drawing from the
/// task's stream in the order: initial positions row by row; then per parent
/// three distinct donors (rejection), the forced index, one uniform per gene.
pub fn reference_de(task: &SubTask, n: usize, generations: usize, run_seed: u64, j: usize) -> DeTrajectory {
    let (f, cr) = (0.5, 0.7);
    let d = task.dim();
    let mut rng = seeds::rng_from(task_stream_seed(run_seed, j));
    let mut pop: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
    let mut fit: Vec<f64> = pop.iter().map(|x| task.evaluate(x)).collect();
    let mut traj = DeTrajectory { positions: vec![pop.clone()], fitness: vec![fit.clone()] };
    for _ in 0..generations {
        let mut trials = Vec::with_capacity(n);
        for i in 0..n {
            let mut r = Vec::new();
            while r.len() < 3 {
                let c = rng.random_range(0..n);
                if c != i && !r.contains(&c) {
                    r.push(c);
                }
            }
            let forced = rng.random_range(0..d);
            let mut trial = pop[i].clone();
            for k in 0..d {
                let u: f64 = rng.random();
                if u < cr || k == forced {
                    trial[k] = pop[r[0]][k] + f * (pop[r[1]][k] - pop[r[2]][k]);
                }
                trial[k] = trial[k].clamp(0.0, 1.0);
            }
            trials.push(trial);
        }
        for (i, t) in trials.into_iter().enumerate() {
            let ft = task.evaluate(&t);
            if ft <= fit[i] {
                pop[i] = t;
                fit[i] = ft;
            }
        }
        traj.positions.push(pop.clone());
        traj.fitness.push(fit.clone());
    }
    traj
}
