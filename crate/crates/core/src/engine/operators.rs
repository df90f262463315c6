//! Offspring generation: DE/rand/1/bin self-evolution and the four
//! transfer operators.

use rand::Rng;

use super::action::TransferOperator;
use super::population::Population;

/// Mutation strength of self-evolution.
pub const SELF_F: f64 = 0.5;
/// Crossover rate of self-evolution.
pub const SELF_CR: f64 = 0.7;

/// Draws `count` distinct indices from `0..n`, none of them in `exclude`,
/// by rejection. Requires `n - exclude.len() >= count`.
pub fn distinct_indices<R: Rng + ?Sized>(rng: &mut R, n: usize, count: usize, exclude: &[usize]) -> Vec<usize> {
    debug_assert!(n >= count + exclude.len());
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let r = rng.random_range(0..n);
        if !exclude.contains(&r) && !out.contains(&r) {
            out.push(r);
        }
    }
    out
}

/// Binomial crossover of `mutant` into `parent`, with one guaranteed mutant
/// gene, clamped to `[0,1]`. Draws the `j_rand` index first, then one
/// uniform per gene.
pub fn binomial_crossover<R: Rng + ?Sized>(parent: &[f64], mutant: &[f64], cr: f64, rng: &mut R) -> Vec<f64> {
    let dim = parent.len();
    let j_rand = rng.random_range(0..dim);
    (0..dim)
        .map(|d| {
            let take = rng.random::<f64>() < cr || d == j_rand;
            let v = if take { mutant[d] } else { parent[d] };
            v.clamp(0.0, 1.0)
        })
        .collect()
}

fn axpy(base: &[f64], f: f64, a: &[f64], b: &[f64]) -> Vec<f64> {
    base.iter().zip(a).zip(b).map(|((x, p), q)| x + f * (p - q)).collect()
}

/// DE/rand/1 mutant for `parent`: `x_r1 + F(x_r2 − x_r3)`.
pub fn rand1_mutant<R: Rng + ?Sized>(pop: &Population, parent: usize, f: f64, rng: &mut R) -> Vec<f64> {
    let r = distinct_indices(rng, pop.size(), 3, &[parent]);
    axpy(pop.individual(r[0]), f, pop.individual(r[1]), pop.individual(r[2]))
}

/// DE/rand/1/bin offspring for each listed parent, in order.
pub fn self_evolve<R: Rng + ?Sized>(pop: &Population, parents: &[usize], f: f64, cr: f64, rng: &mut R) -> Vec<Vec<f64>> {
    parents
        .iter()
        .map(|&i| {
            let mutant = rand1_mutant(pop, i, f, rng);
            binomial_crossover(pop.individual(i), &mutant, cr, rng)
        })
        .collect()
}

/// `count` indices into `elite`, distinct when the elite set is big enough.
fn elite_picks<R: Rng + ?Sized>(rng: &mut R, elite: &[usize], count: usize) -> Vec<usize> {
    if elite.len() >= count {
        distinct_indices(rng, elite.len(), count, &[])
            .into_iter()
            .map(|i| elite[i])
            .collect()
    } else {
        (0..count).map(|_| elite[rng.random_range(0..elite.len())]).collect()
    }
}

/// Parameters of one task's transfer for this generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferSpec {
    pub operator: TransferOperator,
    pub f: f64,
    pub cr: f64,
}

/// Mutant for `host` in the target population using the source elites.
pub fn transfer_mutant<R: Rng + ?Sized>(
    target: &Population,
    source: &Population,
    elite: &[usize],
    host: usize,
    transfer: TransferSpec,
    rng: &mut R,
) -> Vec<f64> {
    let n = target.size();
    let f = transfer.f;
    match transfer.operator {
        TransferOperator::TargetBest => {
            let s = elite_picks(rng, elite, 2);
            axpy(target.individual(target.best_index()), f, source.individual(s[0]), source.individual(s[1]))
        }
        TransferOperator::TargetRand => {
            let t = distinct_indices(rng, n, 1, &[host]);
            let s = elite_picks(rng, elite, 2);
            axpy(target.individual(t[0]), f, source.individual(s[0]), source.individual(s[1]))
        }
        TransferOperator::SourceRand => {
            let s = elite_picks(rng, elite, 1);
            let t = distinct_indices(rng, n, 2, &[host]);
            axpy(source.individual(s[0]), f, target.individual(t[0]), target.individual(t[1]))
        }
        TransferOperator::SourceBest => {
            let t = distinct_indices(rng, n, 2, &[host]);
            axpy(source.individual(source.best_index()), f, target.individual(t[0]), target.individual(t[1]))
        }
    }
}

/// Number of transfer offspring for a proportion of a population, rounded
/// half-up and capped at the population size.
pub fn transfer_count(rate: f64, pop_size: usize) -> usize {
    ((rate * pop_size as f64 + 0.5).floor() as usize).min(pop_size)
}

/// Knowledge-transfer offspring for the listed host parents. The elite set is
/// the `hosts.len()` best members of `source`.
pub fn transfer_evolve<R: Rng + ?Sized>(
    target: &Population,
    source: &Population,
    hosts: &[usize],
    transfer: TransferSpec,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    if hosts.is_empty() {
        return Vec::new();
    }
    let elite = source.elite_indices(hosts.len());
    hosts
        .iter()
        .map(|&h| {
            let mutant = transfer_mutant(target, source, &elite, h, transfer, rng);
            binomial_crossover(target.individual(h), &mutant, transfer.cr, rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::{BasicFunction, SubTask};
    use crate::nn::Matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_pop(seed: u64, n: usize, d: usize) -> Population {
        let task = SubTask::plain(BasicFunction::Sphere, d);
        Population::random(&task, n, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn distinct_indices_respect_exclusions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let r = distinct_indices(&mut rng, 4, 3, &[2]);
            assert!(!r.contains(&2));
            assert_ne!(r[0], r[1]);
            assert_ne!(r[1], r[2]);
            assert_ne!(r[0], r[2]);
        }
    }

    #[test]
    fn crossover_at_full_rate_copies_mutant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let child = binomial_crossover(&[0.1; 5], &[0.9; 5], 1.0, &mut rng);
        assert_eq!(child, vec![0.9; 5]);
    }

    #[test]
    fn crossover_at_zero_rate_keeps_one_gene() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let child = binomial_crossover(&[0.1; 5], &[0.9; 5], 0.0, &mut rng);
        assert_eq!(child.iter().filter(|&&v| v == 0.9).count(), 1);
    }

    #[test]
    fn crossover_clamps() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let child = binomial_crossover(&[0.5; 3], &[-0.3, 1.4, 0.2], 1.0, &mut rng);
        assert_eq!(child, vec![0.0, 1.0, 0.2]);
    }

    #[test]
    fn zero_difference_gives_base_vector() {
        let task = SubTask::plain(BasicFunction::Sphere, 2);
        let rows = vec![vec![0.3, 0.3], vec![0.3, 0.3], vec![0.3, 0.3], vec![0.8, 0.1]];
        let pop = Population::from_positions(&task, Matrix::from_rows(&rows).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // parent 3 excluded, so r1, r2, r3 are all copies of (0.3, 0.3)
        assert_eq!(rand1_mutant(&pop, 3, 0.5, &mut rng), vec![0.3, 0.3]);
    }

    #[test]
    fn rounding_rule() {
        assert_eq!(transfer_count(0.2, 50), 10);
        assert_eq!(transfer_count(0.0, 50), 0);
        assert_eq!(transfer_count(0.01, 50), 1); // 0.5 rounds up
        assert_eq!(transfer_count(0.009, 50), 0);
        assert_eq!(transfer_count(1.0, 50), 50);
    }

    #[test]
    fn operator_one_uses_target_best_and_distinct_elites() {
        let target = random_pop(5, 8, 3);
        let source = random_pop(6, 8, 3);
        let elite = source.elite_indices(4);
        let transfer = TransferSpec { operator: TransferOperator::TargetBest, f: 0.7, cr: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut replay = rng.clone();
        let v = transfer_mutant(&target, &source, &elite, 2, transfer, &mut rng);
        let picks = distinct_indices(&mut replay, 4, 2, &[]);
        let (a, b) = (elite[picks[0]], elite[picks[1]]);
        assert_ne!(a, b);
        let tb = target.individual(target.best_index());
        for d in 0..3 {
            let expect = tb[d] + 0.7 * (source.individual(a)[d] - source.individual(b)[d]);
            assert_eq!(v[d], expect);
        }
    }

    #[test]
    fn operator_three_with_zero_f_injects_source_elite() {
        let target = random_pop(8, 6, 4);
        let source = random_pop(9, 6, 4);
        let elite = source.elite_indices(2);
        let transfer = TransferSpec { operator: TransferOperator::SourceRand, f: 0.0, cr: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let v = transfer_mutant(&target, &source, &elite, 0, transfer, &mut rng);
        assert!(elite.iter().any(|&e| source.individual(e) == v.as_slice()));
    }

    #[test]
    fn single_elite_is_usable_by_every_operator() {
        let target = random_pop(11, 5, 2);
        let source = random_pop(12, 5, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for op in TransferOperator::ALL {
            let transfer = TransferSpec { operator: op, f: 0.5, cr: 0.5 };
            let kids = transfer_evolve(&target, &source, &[3], transfer, &mut rng);
            assert_eq!(kids.len(), 1);
            assert!(kids[0].iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let transfer = TransferSpec { operator: TransferOperator::TargetBest, f: 0.5, cr: 0.5 };
        assert!(transfer_evolve(&target, &source, &[], transfer, &mut rng).is_empty());
    }
}
