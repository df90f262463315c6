//! End-to-end acceptance criteria. Each test prints one PASS/FAIL line.

mod common;

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::{reference_de, report};
use emtlab_core::benchmark::{
    generate_awcci, orthogonality_error, BasicFunction, MtoInstance, ShiftLevel, SCHWEFEL_OPTIMUM,
};
use emtlab_core::engine::{ActionBundle, EmtState, EngineConfig};
use emtlab_core::harness::{
    argmax_source_rate, collect_attention, duplicate_pair_instance, evaluate, evaluate_run, split_train_test,
    wilcoxon_signed_rank, AblationVariant, EvalSettings, EvaluationResult,
};
use emtlab_core::nn::gradcheck::{check_gradients, Coverage};
use emtlab_core::nn::{Matrix, Tape};
use emtlab_core::policy::{Mode, Overrides, Policy, PolicyStreams, MAX_TRANSFER_RATE};
use emtlab_core::ppo::{train, PpoConfig, TrainOptions, TrainOutcome};
use emtlab_core::engine::StateFeatures;
use rayon::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DESK_TASKS: usize = 5;
const DESK_DIM: usize = 10;
const DESK_POP: usize = 30;
const DESK_BUDGET: usize = 100;
const DESK_TRAIN: usize = 20;
const DESK_HELD_OUT: usize = 10;
const DESK_EPOCHS: usize = 3;
const DATASET_SEED: u64 = 7;
const MASTER_SEEDS: [u64; 3] = [11, 22, 33];
const EVAL_SEED: u64 = 99;
const EVAL_RUNS: usize = 5;

struct Desk {
    held_out: Vec<MtoInstance>,
    runs: Vec<(u64, TrainOutcome, Duration)>,
}

impl Desk {
    fn policy(&self) -> &Policy {
        &self.runs[0].1.policy
    }
}

fn desk_config() -> PpoConfig {
    PpoConfig { epochs: DESK_EPOCHS, budget: DESK_BUDGET, ..PpoConfig::default() }
}

/// Trains once per master seed; shared by every learning criterion.
fn desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(|| {
        let all: Vec<MtoInstance> = ShiftLevel::ALL
            .iter()
            .flat_map(|&l| generate_awcci(l, DATASET_SEED, DESK_TASKS, DESK_DIM).unwrap())
            .collect();
        let (train_set, held_out) = split_train_test(&all, DESK_TRAIN, DESK_HELD_OUT, DATASET_SEED).unwrap();
        let cfg = desk_config();
        let runs = MASTER_SEEDS
            .par_iter()
            .map(|&seed| {
                let start = Instant::now();
                let out = train(&train_set, &cfg, &TrainOptions::new(DESK_POP, seed)).unwrap();
                (seed, out, start.elapsed())
            })
            .collect();
        Desk { held_out, runs }
    })
}

fn desk_eval(variant: AblationVariant) -> Vec<EvaluationResult> {
    let d = desk();
    let settings = EvalSettings::new(DESK_POP, DESK_BUDGET, EVAL_RUNS, EVAL_SEED).with_variant(variant);
    let policy = variant.uses_policy().then(|| d.policy());
    evaluate(policy, &d.held_out, &settings).unwrap()
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn features(k: usize, rng: &mut ChaCha8Rng) -> StateFeatures {
    StateFeatures(Matrix::from_vec(k, 5, (0..k * 5).map(|_| rng.random()).collect()).unwrap())
}

#[test]
fn benchmark_correctness() {
    let start = Instant::now();
    let mut worst_opt: f64 = 0.0;
    for f in BasicFunction::ALL {
        for dim in [1, 2, 10, 50] {
            let v = f.evaluate(&f.optimizer(dim)).abs();
            let tol = if f == BasicFunction::Schwefel { 1e-2 } else { 1e-8 };
            assert!(v < tol, "{f} at D={dim}: {v}");
            if f != BasicFunction::Schwefel {
                worst_opt = worst_opt.max(v);
            }
        }
    }
    let schwefel = BasicFunction::Schwefel.evaluate(&vec![SCHWEFEL_OPTIMUM; 50]).abs();
    let mut count = 0;
    let mut worst_orth: f64 = 0.0;
    for level in ShiftLevel::ALL {
        let set = generate_awcci(level, 2024, 10, 50).unwrap();
        assert_eq!(set.len(), 127);
        for inst in &set {
            assert_eq!(inst.num_tasks(), 10);
            for t in &inst.sub_tasks {
                assert_eq!(t.dim(), 50);
                worst_orth = worst_orth.max(orthogonality_error(&t.rotation));
            }
        }
        count += set.len();
    }
    let elapsed = start.elapsed();
    let pass = count == 635 && worst_orth < 1e-10 && schwefel < 1e-2 && worst_opt < 1e-8 && elapsed.as_secs() < 60;
    report(
        "benchmark correctness",
        pass,
        &format!(
            "max|f(x*)|={worst_opt:.2e}, schwefel={schwefel:.2e}, max|WtW-I|={worst_orth:.2e}, instances={count}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

fn head_params(policy: &Policy, prefixes: &[&str]) -> Vec<String> {
    policy.params.names().filter(|n| prefixes.iter().any(|p| n.starts_with(p))).map(str::to_owned).collect()
}

#[test]
fn gradient_suite() {
    let start = Instant::now();
    let heads: [(&str, &[&str]); 7] = [
        ("embedder", &["embed."]),
        ("attention+batch-norm", &["embed.", "route."]),
        ("KC", &["kc.", "route.", "embed."]),
        ("OP", &["op.", "route.", "embed."]),
        ("F", &["mutation.", "route.", "embed."]),
        ("Cr", &["crossover.", "route.", "embed."]),
        ("critic", &["critic."]),
    ];
    let mut worst = vec![0.0f64; heads.len()];
    let mut checked = 0;
    let mut kinks = 0;
    let mut joint: f64 = 0.0;
    for seed in 0..20u64 {
        for k in [2usize, 5] {
            let policy = Policy::new(1000 + seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 31 + k as u64);
            let f = features(k, &mut rng);
            let mut streams = PolicyStreams::new(seed, k);
            let action = policy.act(&f, Mode::Sample, &mut streams).unwrap().action;
            let wk = Matrix::from_vec(k, 64, (0..k * 64).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let wk2 = Matrix::from_vec(k, 64, (0..k * 64).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let ws = Matrix::from_vec(k, k, (0..k * k).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let wh = Matrix::from_vec(k, 1, (0..k).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            for (h, (name, prefixes)) in heads.iter().enumerate() {
                let names = head_params(&policy, prefixes);
                let names: Vec<&str> = names.iter().map(String::as_str).collect();
                let build = |tape: &mut Tape, p: &emtlab_core::nn::ParamSet| {
                    let pol = Policy::from_params(p.clone());
                    let weigh = |tape: &mut Tape, v, w: &Matrix| {
                        let w = tape.constant(w.clone());
                        let m = tape.mul(v, w)?;
                        Ok::<_, emtlab_core::Error>(tape.sum(m))
                    };
                    match *name {
                        "embedder" => {
                            let e = pol.embed(tape, &f)?;
                            weigh(tape, e, &wk)
                        }
                        "attention+batch-norm" => {
                            let e = pol.embed(tape, &f)?;
                            let (s, d) = pol.tr_forward(tape, e)?;
                            let a = weigh(tape, s, &ws)?;
                            let b = weigh(tape, d, &wk2)?;
                            tape.add(a, b)
                        }
                        "critic" => pol.critic(tape, &f),
                        head => {
                            let e = pol.embed(tape, &f)?;
                            let (_, d) = pol.tr_forward(tape, e)?;
                            let c = Policy::pair_concat(tape, d, &action.source)?;
                            match head {
                                "KC" => {
                                    let m = pol.kc_mean(tape, c)?;
                                    weigh(tape, m, &wh)
                                }
                                "F" => {
                                    let m = pol.f_mean(tape, c)?;
                                    weigh(tape, m, &wh)
                                }
                                "Cr" => {
                                    let m = pol.cr_mean(tape, c)?;
                                    weigh(tape, m, &wh)
                                }
                                _ => {
                                    let logits = pol.op_logits(tape, c)?;
                                    let lp = tape.log_softmax_rows(logits);
                                    let picks: Vec<usize> = action.operator.iter().map(|o| o.index()).collect();
                                    let picked = tape.pick_per_row(lp, &picks)?;
                                    Ok(tape.sum(picked))
                                }
                            }
                        }
                    }
                };
                let r = check_gradients(&policy.params, &names, Coverage::Sample(4), &mut rng, &build).unwrap();
                worst[h] = worst[h].max(r.max_rel_err);
                checked += r.entries_checked;
                kinks += r.kinks_skipped;
            }
            let names = head_params(&policy, &["embed.", "route.", "kc.", "op.", "mutation.", "crossover."]);
            let names: Vec<&str> = names.iter().map(String::as_str).collect();
            let r = check_gradients(&policy.params, &names, Coverage::Sample(2), &mut rng, &|tape, p| {
                let d = Policy::from_params(p.clone()).action_density(tape, &f, &action, &Overrides::none())?;
                Ok(d.log_prob)
            })
            .unwrap();
            joint = joint.max(r.max_rel_err);
        }
    }
    let elapsed = start.elapsed();
    let pass = worst.iter().all(|&e| e < 1e-4) && elapsed.as_secs() < 60;
    let per_head: Vec<String> =
        heads.iter().zip(&worst).map(|((n, _), e)| format!("{n}={e:.1e}")).collect();
    report(
        "gradient suite",
        pass,
        &format!(
            "max rel err {}; {checked} entries ({kinks} straddling a ReLU kink skipped), 20 seeds x K in {{2,5}}, {:.1}s; joint log-prob (not a head, informational) {joint:.1e}",
            per_head.join(" "),
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn engine_invariants() {
    let all = generate_awcci(ShiftLevel::M, 5, 5, 10).unwrap();
    let inst = &all[100];
    let (n, g) = (20, 100);
    let policy = Policy::new(5);
    let mut state = EmtState::init(inst, EngineConfig::new(n, g), 77).unwrap();
    let mut streams = PolicyStreams::new(78, 5);
    let mut monotone = true;
    let mut features_ok = state.features().in_range();
    let mut actions_ok = true;
    while !state.is_done() {
        let f = state.features();
        let a = policy.act(&f, Mode::Sample, &mut streams).unwrap().action;
        actions_ok &= a.validate(5, MAX_TRANSFER_RATE).is_ok();
        let before = state.best_so_far();
        state.step(&a).unwrap();
        monotone &= before.iter().zip(state.best_so_far()).all(|(b, a)| a <= *b);
        features_ok &= state.features().in_range();
    }
    let evals_ok = state.evaluations == 5 * n * g;
    let pass = monotone && features_ok && actions_ok && evals_ok;
    report(
        "engine invariants",
        pass,
        &format!(
            "monotone={monotone} features_in_range={features_ok} actions_in_bounds={actions_ok} evaluations={} (expected {})",
            state.evaluations,
            5 * n * g
        ),
    );
    assert!(pass);
}

#[test]
fn oracle_equivalence() {
    let (n, d, g) = (6, 3, 10);
    let mut identical = true;
    for seed in 0..5u64 {
        let all = generate_awcci(ShiftLevel::L, seed, 2, d).unwrap();
        let inst = &all[(seed as usize * 37) % all.len()];
        let run_seed = 1000 + seed;
        let mut state = EmtState::init(inst, EngineConfig::new(n, g), run_seed).unwrap();
        let oracles: Vec<_> = (0..2).map(|j| reference_de(&inst.sub_tasks[j], n, g, run_seed, j)).collect();
        let snapshot = |s: &EmtState, j: usize| {
            let p = &s.populations[j];
            ((0..n).map(|i| p.individual(i).to_vec()).collect::<Vec<_>>(), p.fitness.clone())
        };
        for gen in 0..=g {
            for (j, o) in oracles.iter().enumerate() {
                let (pos, fit) = snapshot(&state, j);
                let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
                identical &= pos.iter().zip(&o.positions[gen]).all(|(a, b)| bits(a) == bits(b));
                identical &= bits(&fit) == bits(&o.fitness[gen]);
            }
            if gen < g {
                state.step(&ActionBundle::no_transfer(2)).unwrap();
            }
        }
    }
    report(
        "oracle equivalence",
        identical,
        "a2=0 engine vs independent DE/rand/1/bin, K=2 N=6 D=3 G=10, 5 seeds: bit-identical positions and fitness",
    );
    assert!(identical);
}

#[test]
fn training_smoke() {
    let d = desk();
    let mut improved = 0;
    let mut lines = Vec::new();
    let mut slowest = Duration::ZERO;
    for (seed, out, took) in &d.runs {
        let means = out.epoch_mean_returns();
        let (first, last) = (means.first().unwrap().1, means.last().unwrap().1);
        if last > first {
            improved += 1;
        }
        slowest = slowest.max(*took);
        lines.push(format!(
            "seed {seed}: {} ({:.0}s)",
            means.iter().map(|(_, m)| format!("{m:.3}")).collect::<Vec<_>>().join(" -> "),
            took.as_secs_f64()
        ));
        assert!(out.failures.is_empty());
    }
    let pass = improved >= 2 && slowest.as_secs() < 30 * 60;
    report(
        "training smoke",
        pass,
        &format!("final > first epoch mean return in {improved}/3 seeds; {}", lines.join("; ")),
    );
    assert!(pass);
}

#[test]
fn learned_policy_advantage() {
    let learned = desk_eval(AblationVariant::Full);
    let random = desk_eval(AblationVariant::RandomAll);
    let none = desk_eval(AblationVariant::NoTransfer);
    let ml = mean(learned.iter().map(|r| r.perf));
    let mr = mean(random.iter().map(|r| r.perf));
    let mn = mean(none.iter().map(|r| r.perf));
    let x: Vec<f64> = learned.iter().map(|r| r.perf).collect();
    let y: Vec<f64> = random.iter().map(|r| r.perf).collect();
    let test = wilcoxon_signed_rank(&x, &y);
    let p = test.as_ref().map(|t| t.p_value).unwrap_or(1.0);
    let pass = ml < mr && ml < mn && p < 0.05;
    report(
        "learned-policy advantage",
        pass,
        &format!(
            "mean perf learned={ml:.4} random_all={mr:.4} no_transfer={mn:.4}; Wilcoxon vs random_all p={p:.3e} over {} pairs",
            x.len()
        ),
    );
    assert!(pass);
}

#[test]
fn transfer_quality() {
    let learned = desk_eval(AblationVariant::Full);
    let random = desk_eval(AblationVariant::RandomAll);
    let kl = mean(learned.iter().map(|r| r.kt_success_ratio));
    let kr = mean(random.iter().map(|r| r.kt_success_ratio));
    let pass = kl >= kr + 0.05;
    report(
        "transfer quality",
        pass,
        &format!("mean kt_success_ratio learned={kl:.4} random_all={kr:.4} (need +0.05)"),
    );
    assert!(pass);
}

#[test]
fn routing_sanity() {
    let d = desk();
    let inst = duplicate_pair_instance(BasicFunction::Ackley, BasicFunction::Rastrigin, ShiftLevel::S, DESK_DIM, 3)
        .unwrap();
    let settings = EvalSettings::new(DESK_POP, DESK_BUDGET, 5, EVAL_SEED);
    let runs = collect_attention(d.policy(), &inst, &settings).unwrap();
    let mut joint = Vec::new();
    let mut one_to_two = Vec::new();
    let mut two_to_one = Vec::new();
    for gens in &runs {
        let both = gens
            .iter()
            .filter(|m| argmax_source_rate(&[(*m).clone()], 0, 1) == 1.0 && argmax_source_rate(&[(*m).clone()], 1, 0) == 1.0)
            .count();
        joint.push(both as f64 / gens.len() as f64);
        one_to_two.push(argmax_source_rate(gens, 0, 1));
        two_to_one.push(argmax_source_rate(gens, 1, 0));
    }
    let rate = mean(joint.iter().copied());
    let pass = rate >= 0.6;
    report(
        "routing sanity",
        pass,
        &format!(
            "mutual argmax pairing of the duplicated tasks in {:.1}% of generations (1->2 {:.1}%, 2->1 {:.1}%), 5 runs",
            100.0 * rate,
            100.0 * mean(one_to_two),
            100.0 * mean(two_to_one)
        ),
    );
    assert!(pass);
}

#[test]
fn variable_k_generalization() {
    let d = desk();
    let mut ok = true;
    let mut detail = Vec::new();
    for k in [3usize, 10] {
        let set = generate_awcci(ShiftLevel::M, 17, k, DESK_DIM).unwrap();
        let inst = &set[60];
        for mode in [Mode::Deterministic, Mode::Sample] {
            let settings = EvalSettings { mode, ..EvalSettings::new(DESK_POP, DESK_BUDGET, 1, 5) };
            match evaluate_run(Some(d.policy()), inst, &settings, 0, 0, true) {
                Ok(out) => {
                    let bounded = out.steps.iter().all(|s| s.action.validate(k, MAX_TRANSFER_RATE).is_ok());
                    ok &= bounded && out.steps.len() == DESK_BUDGET;
                    detail.push(format!("K={k} {mode:?}: {} steps, bounded={bounded}", out.steps.len()));
                }
                Err(e) => {
                    ok = false;
                    detail.push(format!("K={k} {mode:?}: error {e}"));
                }
            }
        }
    }
    report("variable-K generalization", ok, &detail.join("; "));
    assert!(ok);
}

#[test]
fn ablation_harness() {
    let d = desk();
    let policy = d.policy();
    let inst = &d.held_out[0];
    let mut ok = true;
    let mut detail = Vec::new();
    for variant in AblationVariant::SINGLE_HEAD {
        let settings = EvalSettings::new(DESK_POP, DESK_BUDGET, 1, EVAL_SEED).with_variant(variant);
        let out = evaluate_run(Some(policy), inst, &settings, 0, 0, true).unwrap();
        let mut streams = PolicyStreams::new(0, DESK_TASKS);
        let mut substituted = 0;
        let mut clean = true;
        for s in &out.steps {
            let a = &s.action;
            let over = match variant {
                AblationVariant::NoTr => Overrides { source: Some(a.source.clone()), ..Overrides::none() },
                AblationVariant::NoKc => Overrides { transfer_rate: Some(a.transfer_rate.clone()), ..Overrides::none() },
                AblationVariant::NoOp => Overrides { operator: Some(a.operator.clone()), ..Overrides::none() },
                AblationVariant::NoF => Overrides { f: Some(a.f.clone()), ..Overrides::none() },
                _ => Overrides { cr: Some(a.cr.clone()), ..Overrides::none() },
            };
            let full = policy.act(&s.features, Mode::Deterministic, &mut streams).unwrap().action;
            // the variant's action must equal the full policy with only the substituted head replaced
            let patched = policy.act_with(&s.features, Mode::Deterministic, &mut streams, &over).unwrap().action;
            clean &= patched.source == a.source
                && patched.transfer_rate == a.transfer_rate
                && patched.operator == a.operator
                && patched.f == a.f
                && patched.cr == a.cr;
            let differs = match variant {
                AblationVariant::NoTr => full.source != a.source,
                AblationVariant::NoKc => full.transfer_rate != a.transfer_rate,
                AblationVariant::NoOp => full.operator != a.operator,
                AblationVariant::NoF => full.f != a.f,
                _ => full.cr != a.cr,
            };
            if differs {
                substituted += 1;
            }
            if variant != AblationVariant::NoTr {
                let untouched = |x: &ActionBundle, y: &ActionBundle| match variant {
                    AblationVariant::NoKc => x.source == y.source && x.operator == y.operator && x.f == y.f && x.cr == y.cr,
                    AblationVariant::NoOp => x.source == y.source && x.transfer_rate == y.transfer_rate && x.f == y.f && x.cr == y.cr,
                    AblationVariant::NoF => x.source == y.source && x.transfer_rate == y.transfer_rate && x.operator == y.operator && x.cr == y.cr,
                    _ => x.source == y.source && x.transfer_rate == y.transfer_rate && x.operator == y.operator && x.f == y.f,
                };
                clean &= untouched(&full, a);
            }
        }
        let fixed_ok = match variant {
            AblationVariant::NoF => out.steps.iter().all(|s| s.action.f.iter().all(|&v| v == 0.5)),
            AblationVariant::NoCr => out.steps.iter().all(|s| s.action.cr.iter().all(|&v| v == 0.5)),
            _ => true,
        };
        ok &= clean && fixed_ok && out.steps.len() == DESK_BUDGET;
        detail.push(format!("{variant}: clean={clean} substituted in {substituted}/{} steps", out.steps.len()));
    }
    report("ablation harness", ok, &detail.join("; "));
    assert!(ok);
}
