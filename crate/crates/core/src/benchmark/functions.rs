use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The seven base landscapes every generated sub-task is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasicFunction {
    Sphere,
    Rosenbrock,
    Ackley,
    Rastrigin,
    Griewank,
    Weierstrass,
    Schwefel,
}

const WEIERSTRASS_A: f64 = 0.5;
const WEIERSTRASS_B: f64 = 3.0;
const WEIERSTRASS_KMAX: i32 = 20;
const SCHWEFEL_OFFSET: f64 = 418.9829;
/// Coordinate of the Schwefel minimizer in every dimension.
pub const SCHWEFEL_OPTIMUM: f64 = 420.9687;

impl BasicFunction {
    pub const ALL: [BasicFunction; 7] = [
        BasicFunction::Sphere,
        BasicFunction::Rosenbrock,
        BasicFunction::Ackley,
        BasicFunction::Rastrigin,
        BasicFunction::Griewank,
        BasicFunction::Weierstrass,
        BasicFunction::Schwefel,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&f| f == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Sphere => "sphere",
            Self::Rosenbrock => "rosenbrock",
            Self::Ackley => "ackley",
            Self::Rastrigin => "rastrigin",
            Self::Griewank => "griewank",
            Self::Weierstrass => "weierstrass",
            Self::Schwefel => "schwefel",
        }
    }

    /// Search range `[lb, ub]`, identical in every dimension.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            Self::Sphere | Self::Griewank => (-100.0, 100.0),
            Self::Rosenbrock | Self::Ackley | Self::Rastrigin => (-50.0, 50.0),
            Self::Weierstrass => (-0.5, 0.5),
            Self::Schwefel => (-500.0, 500.0),
        }
    }

    /// The point where the unrotated, unshifted function attains 0.
    pub fn optimizer(self, dim: usize) -> Vec<f64> {
        match self {
            Self::Rosenbrock => vec![1.0; dim],
            Self::Schwefel => vec![SCHWEFEL_OPTIMUM; dim],
            _ => vec![0.0; dim],
        }
    }

    pub fn evaluate(self, z: &[f64]) -> f64 {
        let d = z.len() as f64;
        match self {
            Self::Sphere => z.iter().map(|v| v * v).sum(),
            Self::Rosenbrock => z
                .windows(2)
                .map(|w| 100.0 * (w[0] * w[0] - w[1]).powi(2) + (w[0] - 1.0).powi(2))
                .sum(),
            Self::Ackley => {
                let sq = z.iter().map(|v| v * v).sum::<f64>() / d;
                let cs = z.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / d;
                -20.0 * (-0.2 * sq.sqrt()).exp() - cs.exp() + 20.0 + E
            }
            Self::Rastrigin => {
                z.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos() + 10.0).sum()
            }
            Self::Griewank => {
                let sq = z.iter().map(|v| v * v).sum::<f64>() / 4000.0;
                let prod: f64 = z
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (v / ((i + 1) as f64).sqrt()).cos())
                    .product();
                1.0 + sq - prod
            }
            Self::Weierstrass => {
                let terms = || {
                    (0..=WEIERSTRASS_KMAX)
                        .map(|k| (WEIERSTRASS_A.powi(k), 2.0 * PI * WEIERSTRASS_B.powi(k)))
                };
                let body: f64 = z
                    .iter()
                    .map(|v| terms().map(|(ak, wk)| ak * (wk * (v + 0.5)).cos()).sum::<f64>())
                    .sum();
                let baseline: f64 = terms().map(|(ak, wk)| ak * (wk * 0.5).cos()).sum();
                body - d * baseline
            }
            Self::Schwefel => {
                SCHWEFEL_OFFSET * d - z.iter().map(|v| v * v.abs().sqrt().sin()).sum::<f64>()
            }
        }
    }
}

impl fmt::Display for BasicFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BasicFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown function `{s}`")))
    }
}
