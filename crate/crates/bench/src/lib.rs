//! Fixtures shared by the benchmarks.

use emtlab_core::benchmark::{generate_awcci, MtoInstance, ShiftLevel};

/// First generated instance at shift level S.
pub fn instance(tasks: usize, dim: usize) -> MtoInstance {
    generate_awcci(ShiftLevel::S, 17, tasks, dim).expect("generation succeeds").swap_remove(0)
}
