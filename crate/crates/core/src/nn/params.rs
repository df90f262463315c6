use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Version written into every checkpoint; loading any other version fails.
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Matrix,
    pub grad: Matrix,
    pub moment1: Matrix,
    pub moment2: Matrix,
    pub step_count: u64,
}

impl Param {
    fn new(value: Matrix) -> Self {
        let (r, c) = value.shape();
        Self {
            value,
            grad: Matrix::zeros(r, c),
            moment1: Matrix::zeros(r, c),
            moment2: Matrix::zeros(r, c),
            step_count: 0,
        }
    }
}

/// Named trainable arrays with their gradients and optimizer moments.
///
/// Iteration order is the lexicographic order of names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    entries: BTreeMap<String, Param>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) {
        self.entries.insert(name.into(), Param::new(value));
    }

    /// Inserts a `rows×cols` array drawn from `U[-1/√fan_in, 1/√fan_in]`.
    pub fn insert_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut R,
    ) {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
        self.insert(name, Matrix::from_vec(rows, cols, data).expect("shape"));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn value(&self, name: &str) -> Option<&Matrix> {
        self.entries.get(name).map(|p| &p.value)
    }

    pub fn value_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.entries.get_mut(name).map(|p| &mut p.value)
    }

    pub fn grad(&self, name: &str) -> Option<&Matrix> {
        self.entries.get(name).map(|p| &p.grad)
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|p| p.value.data().len()).sum()
    }

    pub fn accumulate_grad(&mut self, name: &str, grad: &Matrix) -> Result<()> {
        let p = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::Dimension(format!("unknown parameter `{name}`")))?;
        if p.grad.shape() != grad.shape() {
            return Err(Error::Dimension(format!(
                "gradient for `{name}` has shape {:?}, expected {:?}",
                grad.shape(),
                p.grad.shape()
            )));
        }
        p.grad.add_assign(grad);
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for p in self.entries.values_mut() {
            p.grad.data_mut().fill(0.0);
        }
    }

    /// Euclidean norm over every gradient entry.
    pub fn grad_norm(&self) -> f64 {
        self.entries
            .values()
            .flat_map(|p| p.grad.data())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// One bias-corrected Adam update over every parameter, then clears the
    /// gradients. A parameter whose gradient is entirely zero is left as is,
    /// moments and step count included.
    pub fn adam_step(&mut self, learning_rate: f64, cfg: AdamConfig) {
        for p in self.entries.values_mut() {
            if p.grad.data().iter().all(|&g| g == 0.0) {
                continue;
            }
            p.step_count += 1;
            let t = p.step_count as i32;
            let c1 = 1.0 - cfg.beta1.powi(t);
            let c2 = 1.0 - cfg.beta2.powi(t);
            let grads = p.grad.data().to_vec();
            let m = p.moment1.data_mut();
            for (mi, g) in m.iter_mut().zip(&grads) {
                *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * g;
            }
            let v = p.moment2.data_mut();
            for (vi, g) in v.iter_mut().zip(&grads) {
                *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * g * g;
            }
            let (m, v) = (p.moment1.data().to_vec(), p.moment2.data().to_vec());
            for ((w, mi), vi) in p.value.data_mut().iter_mut().zip(&m).zip(&v) {
                let m_hat = mi / c1;
                let v_hat = vi / c2;
                *w -= learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        self.zero_grad();
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            params: self
                .entries
                .iter()
                .map(|(name, p)| ParamRecord {
                    name: name.clone(),
                    shape: [p.value.rows(), p.value.cols()],
                    values: p.value.data().to_vec(),
                    moment1: p.moment1.data().to_vec(),
                    moment2: p.moment2.data().to_vec(),
                    step_count: p.step_count,
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "checkpoint format version {} is not supported (expected {})",
                ckpt.format_version, CHECKPOINT_FORMAT_VERSION
            )));
        }
        let mut set = ParamSet::new();
        for rec in ckpt.params {
            let [rows, cols] = rec.shape;
            let n = rows * cols;
            if rec.values.len() != n || rec.moment1.len() != n || rec.moment2.len() != n {
                return Err(Error::Parse(format!(
                    "record `{}` does not match its shape {rows}x{cols}",
                    rec.name
                )));
            }
            if set.contains(&rec.name) {
                return Err(Error::Parse(format!("duplicate record `{}`", rec.name)));
            }
            set.entries.insert(
                rec.name,
                Param {
                    value: Matrix::from_vec(rows, cols, rec.values)?,
                    grad: Matrix::zeros(rows, cols),
                    moment1: Matrix::from_vec(rows, cols, rec.moment1)?,
                    moment2: Matrix::from_vec(rows, cols, rec.moment2)?,
                    step_count: rec.step_count,
                },
            );
        }
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.to_checkpoint())?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let wrap = |reason: String| Error::Checkpoint { path: path.to_owned(), reason };
        let text = fs::read_to_string(path).map_err(|e| wrap(e.to_string()))?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| {
            let version = serde_json::from_str::<serde_json::Value>(&text)
                .ok()
                .and_then(|v| v.get("format_version").cloned());
            match version {
                Some(v) => wrap(format!("malformed checkpoint (format_version {v}): {e}")),
                None => wrap(format!("not a checkpoint (no format_version): {e}")),
            }
        })?;
        Self::from_checkpoint(ckpt).map_err(|e| wrap(e.to_string()))
    }
}

/// On-disk form of a [`ParamSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub params: Vec<ParamRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
    pub moment1: Vec<f64>,
    pub moment2: Vec<f64>,
    pub step_count: u64,
}
