use std::io::Write;

use serde::{Deserialize, Serialize};

use super::action::ActionBundle;
use super::features::StateFeatures;
use super::state::StepOutcome;
use crate::error::Result;

/// One task's record of one generation. Column order is frozen.
///
/// The features are the ones the controller observed before acting,
/// `best_so_far` and the transfer counts are after selection, and `reward`
/// is the whole step's reward repeated on every task row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub generation: usize,
    pub task: usize,
    pub best_so_far: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
    pub s4: f64,
    pub s5: f64,
    pub n_transfer: usize,
    pub n_success: usize,
    pub source_task: usize,
    pub a2: f64,
    pub op_id: u8,
    #[serde(rename = "F")]
    pub f: f64,
    #[serde(rename = "Cr")]
    pub cr: f64,
    pub reward: f64,
}

pub fn trace_rows(
    generation: usize,
    features: &StateFeatures,
    action: &ActionBundle,
    outcome: &StepOutcome,
    best_after: &[f64],
) -> Vec<TraceRow> {
    (0..features.num_tasks())
        .map(|j| {
            let s = features.task(j);
            TraceRow {
                generation,
                task: j,
                best_so_far: best_after[j],
                s1: s[0],
                s2: s[1],
                s3: s[2],
                s4: s[3],
                s5: s[4],
                n_transfer: outcome.transfers[j].transferred,
                n_success: outcome.transfers[j].survived,
                source_task: action.source[j],
                a2: action.transfer_rate[j],
                op_id: action.operator[j].id(),
                f: action.f[j],
                cr: action.cr[j],
                reward: outcome.reward,
            }
        })
        .collect()
}

pub fn write_trace<W: Write>(out: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
