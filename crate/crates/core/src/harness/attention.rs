use std::io::Write;

use super::evaluate::{evaluate_run, EvalSettings, StepRecord};
use crate::benchmark::MtoInstance;
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::policy::Policy;

pub const ATTENTION_HEADER: &str = "run,generation,target,source,score";

/// Routing scores of every generation of every run, `[run][generation]`.
pub fn collect_attention(
    policy: &Policy,
    instance: &MtoInstance,
    settings: &EvalSettings,
) -> Result<Vec<Vec<Matrix>>> {
    (0..settings.runs)
        .map(|run| {
            let out = evaluate_run(Some(policy), instance, settings, 0, run, true)?;
            out.steps
                .into_iter()
                .map(|StepRecord { scores, .. }| scores.ok_or_else(|| Error::Contract("variant produced no scores".into())))
                .collect()
        })
        .collect()
}

/// Long-format CSV of self-masked, pre-softmax scores; diagonal entries are
/// written as `-inf`.
pub fn write_attention<W: Write>(out: W, runs: &[Vec<Matrix>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ATTENTION_HEADER.split(','))?;
    for (run, gens) in runs.iter().enumerate() {
        for (g, m) in gens.iter().enumerate() {
            for t in 0..m.rows() {
                for s in 0..m.cols() {
                    let score = if s == t { "-inf".to_owned() } else { m[(t, s)].to_string() };
                    w.write_record([run.to_string(), g.to_string(), t.to_string(), s.to_string(), score])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Fraction of generations whose highest off-diagonal score in row `target`
/// is `source`.
pub fn argmax_source_rate(gens: &[Matrix], target: usize, source: usize) -> f64 {
    if gens.is_empty() {
        return 0.0;
    }
    let hits = gens
        .iter()
        .filter(|m| {
            let row = m.row(target);
            let best = (0..row.len())
                .filter(|&s| s != target)
                .fold(None::<usize>, |b, s| match b {
                    Some(b) if row[b] >= row[s] => Some(b),
                    _ => Some(s),
                });
            best == Some(source)
        })
        .count();
    hits as f64 / gens.len() as f64
}
