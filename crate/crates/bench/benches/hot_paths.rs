use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use emtlab_bench::instance;
use emtlab_core::benchmark::BasicFunction;
use emtlab_core::engine::{ActionBundle, EmtState, EngineConfig};
use emtlab_core::policy::{Mode, Policy, PolicyStreams};

fn functions(c: &mut Criterion) {
    let mut group = c.benchmark_group("function_eval_d50");
    let z: Vec<f64> = (0..50).map(|i| 0.37 * i as f64 - 9.0).collect();
    for f in BasicFunction::ALL {
        group.bench_function(f.name(), |b| b.iter(|| f.evaluate(black_box(&z))));
    }
    group.finish();

    let inst = instance(10, 50);
    let x = vec![0.42; 50];
    c.bench_function("subtask_eval_rotated_d50", |b| b.iter(|| inst.sub_tasks[0].evaluate(black_box(&x))));
}

fn policy(c: &mut Criterion) {
    let inst = instance(10, 50);
    let state = EmtState::init(&inst, EngineConfig::new(50, 250), 3).unwrap();
    let features = state.features();
    let policy = Policy::new(1);
    for (name, mode) in [("policy_act_sample_k10", Mode::Sample), ("policy_act_deterministic_k10", Mode::Deterministic)] {
        let mut streams = PolicyStreams::new(5, 10);
        c.bench_function(name, |b| b.iter(|| policy.act(black_box(&features), mode, &mut streams).unwrap()));
    }
}

fn engine(c: &mut Criterion) {
    let inst = instance(10, 50);
    let mut streams = PolicyStreams::new(5, 10);
    let policy = Policy::new(1);
    let fresh = || EmtState::init(&inst, EngineConfig::new(50, 250), 9).unwrap();
    let action = policy.act(&fresh().features(), Mode::Sample, &mut streams).unwrap().action;
    c.bench_function("engine_step_transfer_k10_n50_d50", |b| {
        b.iter_batched(fresh, |mut s| s.step(black_box(&action)).unwrap(), BatchSize::LargeInput)
    });
    let idle = ActionBundle::no_transfer(10);
    c.bench_function("engine_step_no_transfer_k10_n50_d50", |b| {
        b.iter_batched(fresh, |mut s| s.step(black_box(&idle)).unwrap(), BatchSize::LargeInput)
    });
}

criterion_group!(benches, functions, policy, engine);
criterion_main!(benches);
