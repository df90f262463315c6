use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::nn::Matrix;

/// How far a sub-task's optimum may be displaced, as a fraction of its range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftLevel {
    Vs,
    S,
    M,
    L,
    Vl,
}

impl ShiftLevel {
    pub const ALL: [ShiftLevel; 5] =
        [ShiftLevel::Vs, ShiftLevel::S, ShiftLevel::M, ShiftLevel::L, ShiftLevel::Vl];

    pub fn factor(self) -> f64 {
        match self {
            Self::Vs => 0.05,
            Self::S => 0.1,
            Self::M => 0.2,
            Self::L => 0.3,
            Self::Vl => 0.4,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Self::Vs => "vs",
            Self::S => "s",
            Self::M => "m",
            Self::L => "l",
            Self::Vl => "vl",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&l| l == self).unwrap()
    }
}

impl fmt::Display for ShiftLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ShiftLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|l| l.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown shift level `{s}` (vs|s|m|l|vl)")))
    }
}

/// Random orthogonal matrix built as the product of `dim` Householder
/// reflections `I − 2vvᵀ` with `v` uniform on the unit sphere.
pub fn make_rotation<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Matrix {
    let mut w = Matrix::identity(dim);
    let mut v = vec![0.0; dim];
    for _ in 0..dim {
        loop {
            for x in v.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                v.iter_mut().for_each(|x| *x /= norm);
                break;
            }
        }
        // W ← W(I − 2vvᵀ) = W − 2(Wv)vᵀ
        let wv = w.mul_vec(&v);
        for r in 0..dim {
            let scaled = 2.0 * wv[r];
            for (c, vc) in v.iter().enumerate() {
                w[(r, c)] -= scaled * vc;
            }
        }
    }
    w
}

/// `s ~ level · (lb + U[0,1]·(ub − lb))`, componentwise.
pub fn make_shift<R: Rng + ?Sized>(level: f64, lb: f64, ub: f64, dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| level * (lb + rng.random::<f64>() * (ub - lb))).collect()
}

/// Maps unified `[0,1]` coordinates to `[lb, ub]`, clamping out-of-box input first.
pub fn decode(unified: &[f64], lb: f64, ub: f64) -> Vec<f64> {
    unified.iter().map(|u| lb + u.clamp(0.0, 1.0) * (ub - lb)).collect()
}

pub fn encode(x: &[f64], lb: f64, ub: f64) -> Vec<f64> {
    x.iter().map(|v| (v - lb) / (ub - lb)).collect()
}

/// Largest entry of `|WᵀW − I|`.
pub fn orthogonality_error(w: &Matrix) -> f64 {
    let wtw = w.transpose().matmul(w).expect("square");
    wtw.max_abs_diff(&Matrix::identity(w.rows()))
}
