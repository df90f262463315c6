use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::evaluate::ResultRecord;
use super::wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};
use crate::error::{Error, Result};

pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// `a` is significantly better (lower perf).
    Win,
    Tie,
    Loss,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceComparison {
    pub instance_id: String,
    pub mean_a: f64,
    pub mean_b: f64,
    /// `None` when there are too few non-zero paired differences.
    pub test: Option<WilcoxonResult>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub instances: Vec<InstanceComparison>,
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    /// Over every paired run.
    pub overall: Option<WilcoxonResult>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Pairs runs by (instance, run index) and tests each instance.
pub fn compare(a: &[ResultRecord], b: &[ResultRecord]) -> Result<Comparison> {
    let index: BTreeMap<(&str, usize), f64> = b.iter().map(|r| ((r.instance_id.as_str(), r.run_index), r.perf)).collect();
    let mut grouped: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    for r in a {
        let other = index.get(&(r.instance_id.as_str(), r.run_index)).ok_or_else(|| {
            Error::Parse(format!("run {} of {} missing from the second file", r.run_index, r.instance_id))
        })?;
        let entry = grouped.entry(&r.instance_id).or_insert_with(|| {
            order.push(&r.instance_id);
            (Vec::new(), Vec::new())
        });
        entry.0.push(r.perf);
        entry.1.push(*other);
    }
    if grouped.is_empty() {
        return Err(Error::InsufficientData("no paired runs".into()));
    }
    let mut out = Comparison {
        instances: Vec::new(),
        wins: 0,
        ties: 0,
        losses: 0,
        mean_a: 0.0,
        mean_b: 0.0,
        overall: None,
    };
    let (mut all_a, mut all_b) = (Vec::new(), Vec::new());
    for id in order {
        let (xa, xb) = &grouped[id];
        let test = wilcoxon_signed_rank(xa, xb).ok();
        let (ma, mb) = (mean(xa), mean(xb));
        let verdict = match test {
            Some(t) if t.p_value < SIGNIFICANCE && ma < mb => Verdict::Win,
            Some(t) if t.p_value < SIGNIFICANCE && ma > mb => Verdict::Loss,
            _ => Verdict::Tie,
        };
        match verdict {
            Verdict::Win => out.wins += 1,
            Verdict::Tie => out.ties += 1,
            Verdict::Loss => out.losses += 1,
        }
        out.instances.push(InstanceComparison { instance_id: id.to_owned(), mean_a: ma, mean_b: mb, test, verdict });
        all_a.extend_from_slice(xa);
        all_b.extend_from_slice(xb);
    }
    out.mean_a = mean(&all_a);
    out.mean_b = mean(&all_b);
    out.overall = wilcoxon_signed_rank(&all_a, &all_b).ok();
    Ok(out)
}

impl Comparison {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let fmt_test = |t: &Option<WilcoxonResult>| match t {
            Some(t) => format!("W={} z={:.4} p={:.4e}", t.statistic, t.z, t.p_value),
            None => "insufficient non-zero differences".to_owned(),
        };
        let _ = writeln!(s, "instance\tmean_a\tmean_b\tverdict\ttest");
        for i in &self.instances {
            let v = match i.verdict {
                Verdict::Win => "+",
                Verdict::Tie => "=",
                Verdict::Loss => "-",
            };
            let _ = writeln!(s, "{}\t{:.6}\t{:.6}\t{}\t{}", i.instance_id, i.mean_a, i.mean_b, v, fmt_test(&i.test));
        }
        let _ = writeln!(s, "win/tie/loss (a vs b): {}/{}/{}", self.wins, self.ties, self.losses);
        let _ = writeln!(s, "mean perf: a={:.6} b={:.6}", self.mean_a, self.mean_b);
        let _ = writeln!(s, "overall paired test: {}", fmt_test(&self.overall));
        s
    }
}
