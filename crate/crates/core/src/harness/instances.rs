use rand::seq::index;

use crate::benchmark::{make_rotation, make_shift, BasicFunction, MtoInstance, ShiftLevel, SubTask};
use crate::error::{Error, Result};
use crate::seeds;

/// `count` instances drawn without replacement, kept in dataset order.
pub fn sample_subset(instances: &[MtoInstance], count: usize, seed: u64) -> Result<Vec<MtoInstance>> {
    if count > instances.len() {
        return Err(Error::Config(format!("asked for {count} of {} instances", instances.len())));
    }
    let mut picks = index::sample(&mut seeds::rng_from(seed), instances.len(), count).into_vec();
    picks.sort_unstable();
    Ok(picks.into_iter().map(|i| instances[i].clone()).collect())
}

/// Disjoint train and held-out subsets.
pub fn split_train_test(
    instances: &[MtoInstance],
    train: usize,
    test: usize,
    seed: u64,
) -> Result<(Vec<MtoInstance>, Vec<MtoInstance>)> {
    let both = sample_subset(instances, train + test, seed)?;
    let mut order = index::sample(&mut seeds::rng_from(seeds::derive(seed, 1)), both.len(), both.len()).into_vec();
    let rest = order.split_off(train);
    order.sort_unstable();
    let mut rest = rest;
    rest.sort_unstable();
    Ok((order.iter().map(|&i| both[i].clone()).collect(), rest.iter().map(|&i| both[i].clone()).collect()))
}

/// Five tasks: the first two are identical copies (same function, rotation
/// and shift) of `pair`; the other three use `other` with their own rotation
/// and shift.
pub fn duplicate_pair_instance(
    pair: BasicFunction,
    other: BasicFunction,
    level: ShiftLevel,
    dim: usize,
    seed: u64,
) -> Result<MtoInstance> {
    let mut rng = seeds::rng_from(seed);
    let mut draw = |f: BasicFunction| {
        let (lb, ub) = f.bounds();
        let rotation = make_rotation(dim, &mut rng);
        let shift = make_shift(level.factor(), lb, ub, dim, &mut rng);
        SubTask::new(f, rotation, shift)
    };
    let twin = draw(pair)?;
    let mut tasks = vec![twin.clone(), twin];
    for _ in 0..3 {
        tasks.push(draw(other)?);
    }
    MtoInstance::new(format!("pair-{pair}-{other}"), level, vec![pair, other], tasks)
}
