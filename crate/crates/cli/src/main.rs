use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use emtlab_core::benchmark::{generate_awcci, read_dataset, write_dataset, MtoInstance, ShiftLevel};
use emtlab_core::harness::{
    collect_attention, compare, evaluate, read_results, write_attention, write_convergence, write_results,
    AblationVariant, EvalSettings, EvaluationResult,
};
use emtlab_core::nn::ParamSet;
use emtlab_core::policy::{Mode, Policy};
use emtlab_core::ppo::{train, write_training_log, TrainOptions, TrainingConfig};

/// Learned knowledge transfer for evolutionary multitasking.
#[derive(Parser)]
#[command(name = "emtlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a multitask benchmark set (one instance per line).
    Generate {
        /// Shift level(s): vs, s, m, l, vl.
        #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
        level: Vec<ShiftLevel>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        tasks: usize,
        #[arg(long, default_value_t = 50)]
        dim: usize,
        /// Keep only the first N instances of each level.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a policy from a TOML config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a trained policy.
    Evaluate(EvalArgs),
    /// Evaluate an ablated controller.
    Ablate {
        /// full, no_tr, no_kc, no_op, no_f, no_cr, random_all, no_transfer.
        #[arg(long)]
        variant: AblationVariant,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Write the routing scores of every generation as CSV.
    ExportAttention {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset file holding the instance.
        #[arg(long)]
        instance: PathBuf,
        /// Instance id to pick when the file holds several; defaults to the first.
        #[arg(long)]
        id: Option<String>,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        population: usize,
        #[arg(long, default_value_t = 250)]
        budget: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Paired comparison of two results files.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Also write the summary here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct EvalArgs {
    /// Policy checkpoint; not needed for controllers that ignore the policy.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    population: usize,
    #[arg(long, default_value_t = 250)]
    budget: usize,
    /// Sample actions instead of acting deterministically.
    #[arg(long)]
    sample: bool,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Generate { level, seed, tasks, dim, limit, out } => generate(&level, seed, tasks, dim, limit, &out),
        Command::Train { config, out } => run_train(&config, &out),
        Command::Evaluate(args) => run_evaluate(AblationVariant::Full, &args),
        Command::Ablate { variant, eval } => run_evaluate(variant, &eval),
        Command::ExportAttention { checkpoint, instance, id, runs, seed, population, budget, out } => {
            let policy = load_policy(&checkpoint)?;
            let instances = load_dataset(&instance)?;
            let chosen = match &id {
                Some(id) => instances
                    .iter()
                    .find(|i| &i.instance_id == id)
                    .with_context(|| format!("no instance `{id}` in {}", instance.display()))?,
                None => instances.first().with_context(|| format!("{} holds no instances", instance.display()))?,
            };
            let settings = EvalSettings::new(population, budget, runs, seed);
            let scores = collect_attention(&policy, chosen, &settings)?;
            create_parent(&out)?;
            write_attention(BufWriter::new(create(&out)?), &scores)?;
            log::info!("wrote attention scores of {} to {}", chosen.instance_id, out.display());
            Ok(())
        }
        Command::Compare { a, b, out } => {
            let ra = read_results(&a).with_context(|| format!("reading {}", a.display()))?;
            let rb = read_results(&b).with_context(|| format!("reading {}", b.display()))?;
            let summary = compare(&ra, &rb)?.summary();
            print!("{summary}");
            if let Some(out) = out {
                create_parent(&out)?;
                fs::write(&out, summary).with_context(|| format!("writing {}", out.display()))?;
            }
            Ok(())
        }
    }
}

fn generate(levels: &[ShiftLevel], seed: u64, tasks: usize, dim: usize, limit: Option<usize>, out: &Path) -> Result<()> {
    let mut all = Vec::new();
    for &level in levels {
        let mut set = generate_awcci(level, seed, tasks, dim)?;
        if let Some(n) = limit {
            set.truncate(n);
        }
        all.extend(set);
    }
    create_parent(out)?;
    write_dataset(out, &all).with_context(|| format!("writing {}", out.display()))?;
    log::info!("wrote {} instances to {}", all.len(), out.display());
    Ok(())
}

fn run_train(config_path: &Path, out: &Path) -> Result<()> {
    let config =
        TrainingConfig::load(config_path).with_context(|| format!("loading config {}", config_path.display()))?;
    let instances = load_dataset(&config.dataset)?;
    for inst in &instances {
        if let Some(k) = config.tasks {
            if inst.num_tasks() != k {
                bail!("instance {} has {} tasks, config expects {k}", inst.instance_id, inst.num_tasks());
            }
        }
        if let Some(d) = config.dim {
            if let Some(t) = inst.sub_tasks.iter().find(|t| t.dim() != d) {
                bail!("instance {} has a sub-task of dimension {}, config expects {d}", inst.instance_id, t.dim());
            }
        }
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut options = TrainOptions::new(config.population, config.seed);
    options.checkpoint_dir = Some(out.join("checkpoints"));
    let outcome = train(&instances, &config.ppo, &options)?;
    write_training_log(out.join("training_log.csv"), &outcome.log)?;
    outcome.policy.params.save(out.join("policy.json"))?;
    for (epoch, mean) in outcome.epoch_mean_returns() {
        println!("epoch {epoch}: mean episode return {mean:.4}");
    }
    if !outcome.failures.is_empty() {
        log::warn!("{} episodes failed and were skipped", outcome.failures.len());
    }
    println!("final policy written to {}", out.join("policy.json").display());
    Ok(())
}

fn run_evaluate(variant: AblationVariant, args: &EvalArgs) -> Result<()> {
    let policy = match (&args.checkpoint, variant.uses_policy()) {
        (Some(path), _) => Some(load_policy(path)?),
        (None, true) => bail!("variant {variant} needs --checkpoint"),
        (None, false) => None,
    };
    let instances = load_dataset(&args.dataset)?;
    let mut settings = EvalSettings::new(args.population, args.budget, args.runs, args.seed).with_variant(variant);
    if args.sample {
        settings.mode = Mode::Sample;
    }
    let results = evaluate(policy.as_ref(), &instances, &settings)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_results(BufWriter::new(create(&args.out.join("results.csv"))?), &results, variant)?;
    write_convergence(BufWriter::new(create(&args.out.join("convergence.csv"))?), &results)?;
    print_summary(variant, &results);
    Ok(())
}

fn print_summary(variant: AblationVariant, results: &[EvaluationResult]) {
    let n = results.len().max(1) as f64;
    let perf = results.iter().map(|r| r.perf).sum::<f64>() / n;
    let kt = results.iter().map(|r| r.kt_success_ratio).sum::<f64>() / n;
    println!("{variant}: {} runs, mean perf {perf:.6}, mean kt_success_ratio {kt:.4}", results.len());
}

fn load_policy(path: &Path) -> Result<Policy> {
    Ok(Policy::from_params(ParamSet::load(path)?))
}

fn load_dataset(path: &Path) -> Result<Vec<MtoInstance>> {
    let set = read_dataset(path).with_context(|| format!("reading dataset {}", path.display()))?;
    if set.is_empty() {
        bail!("dataset {} is empty", path.display());
    }
    Ok(set)
}

fn create(path: &Path) -> Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
        }
        _ => Ok(()),
    }
}
