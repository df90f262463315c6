use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four knowledge-transfer mutation operators.
///
/// | id | mutant |
/// |----|--------|
/// | 1 | `T_best + F·(S_r1 − S_r2)` |
/// | 2 | `T_r1 + F·(S_r2 − S_r3)` |
/// | 3 | `S_r1 + F·(T_r2 − T_r3)` |
/// | 4 | `S_best + F·(T_r1 − T_r2)` |
///
/// `T` is the target population, `S` the elite slice of the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransferOperator {
    TargetBest,
    TargetRand,
    SourceRand,
    SourceBest,
}

impl TransferOperator {
    pub const ALL: [TransferOperator; 4] = [
        TransferOperator::TargetBest,
        TransferOperator::TargetRand,
        TransferOperator::SourceRand,
        TransferOperator::SourceBest,
    ];

    /// 1-based operator id.
    pub fn id(self) -> u8 {
        self.index() as u8 + 1
    }

    /// 0-based position in [`TransferOperator::ALL`].
    pub fn index(self) -> usize {
        match self {
            Self::TargetBest => 0,
            Self::TargetRand => 1,
            Self::SourceRand => 2,
            Self::SourceBest => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn from_id(id: u8) -> Option<Self> {
        (id as usize).checked_sub(1).and_then(Self::from_index)
    }
}

impl fmt::Display for TransferOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}

/// Means of the Gaussian heads, kept for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionMeans {
    pub transfer_rate: Vec<f64>,
    pub f: Vec<f64>,
    pub cr: Vec<f64>,
}

/// One generation's joint decision for all K tasks. Task indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionBundle {
    /// Source task for each target; never the target itself.
    pub source: Vec<usize>,
    /// Proportion of the population produced by transfer.
    pub transfer_rate: Vec<f64>,
    pub operator: Vec<TransferOperator>,
    pub f: Vec<f64>,
    pub cr: Vec<f64>,
    pub log_prob: f64,
    pub means: Option<ActionMeans>,
}

impl ActionBundle {
    /// No transfer anywhere; sources point at the next task.
    pub fn no_transfer(tasks: usize) -> Self {
        Self {
            source: (0..tasks).map(|j| (j + 1) % tasks).collect(),
            transfer_rate: vec![0.0; tasks],
            operator: vec![TransferOperator::TargetBest; tasks],
            f: vec![0.5; tasks],
            cr: vec![0.5; tasks],
            log_prob: 0.0,
            means: None,
        }
    }

    pub fn num_tasks(&self) -> usize {
        self.source.len()
    }

    /// Checks every range bound; `max_transfer_rate` is 0.5 unless an
    /// experiment deliberately relaxes it.
    pub fn validate(&self, tasks: usize, max_transfer_rate: f64) -> Result<()> {
        let lens = [self.source.len(), self.transfer_rate.len(), self.operator.len(), self.f.len(), self.cr.len()];
        if lens.iter().any(|&l| l != tasks) {
            return Err(Error::Contract(format!("action has lengths {lens:?}, expected {tasks}")));
        }
        for j in 0..tasks {
            let src = self.source[j];
            if src == j {
                return Err(Error::Contract(format!("task {j} routed to itself")));
            }
            if src >= tasks {
                return Err(Error::Contract(format!("task {j} routed to missing task {src}")));
            }
            let rate = self.transfer_rate[j];
            if !(0.0..=max_transfer_rate).contains(&rate) {
                return Err(Error::Contract(format!("transfer rate {rate} outside [0, {max_transfer_rate}]")));
            }
            for (what, v) in [("F", self.f[j]), ("Cr", self.cr[j])] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Contract(format!("{what} = {v} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operator_ids() {
        for (i, op) in TransferOperator::ALL.into_iter().enumerate() {
            assert_eq!(op.id() as usize, i + 1);
            assert_eq!(TransferOperator::from_id(op.id()), Some(op));
        }
        assert_eq!(TransferOperator::from_id(0), None);
        assert_eq!(TransferOperator::from_id(5), None);
    }

    #[test]
    fn validation() {
        let mut a = ActionBundle::no_transfer(3);
        assert!(a.validate(3, 0.5).is_ok());
        a.source[1] = 1;
        assert!(matches!(a.validate(3, 0.5), Err(Error::Contract(_))));
        let mut a = ActionBundle::no_transfer(3);
        a.transfer_rate[0] = 0.7;
        assert!(a.validate(3, 0.5).is_err());
        assert!(a.validate(3, 1.0).is_ok());
        a.f[2] = 1.2;
        assert!(a.validate(3, 1.0).is_err());
    }
}
