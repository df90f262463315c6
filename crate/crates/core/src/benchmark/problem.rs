use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::functions::BasicFunction;
use super::transform::{decode, make_rotation, make_shift, orthogonality_error, ShiftLevel};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::seeds;

/// One rotated, shifted minimization task over `[lb, ub]^D`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubTask {
    pub function: BasicFunction,
    pub rotation: Matrix,
    pub shift: Vec<f64>,
    pub lb: f64,
    pub ub: f64,
}

impl SubTask {
    pub fn new(function: BasicFunction, rotation: Matrix, shift: Vec<f64>) -> Result<Self> {
        let (lb, ub) = function.bounds();
        let task = Self { function, rotation, shift, lb, ub };
        task.validate()?;
        Ok(task)
    }

    /// Identity rotation, zero shift.
    pub fn plain(function: BasicFunction, dim: usize) -> Self {
        let (lb, ub) = function.bounds();
        Self { function, rotation: Matrix::identity(dim), shift: vec![0.0; dim], lb, ub }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::InvalidInstance("sub-task dimension must be >= 1".into()));
        }
        if self.rotation.shape() != (d, d) {
            return Err(Error::InvalidInstance(format!(
                "rotation is {:?}, expected {d}x{d}",
                self.rotation.shape()
            )));
        }
        if !(self.lb < self.ub) {
            return Err(Error::InvalidInstance(format!("bounds [{}, {}]", self.lb, self.ub)));
        }
        let err = orthogonality_error(&self.rotation);
        if err > 1e-10 {
            return Err(Error::InvalidInstance(format!("rotation not orthogonal (error {err:e})")));
        }
        Ok(())
    }

    /// Objective at a point of the unified `[0,1]^D` space:
    /// `f(Wᵀ(decode(x) − s))`.
    pub fn evaluate(&self, unified: &[f64]) -> f64 {
        let mut x = decode(unified, self.lb, self.ub);
        for (xi, si) in x.iter_mut().zip(&self.shift) {
            *xi -= si;
        }
        let z = self.rotation.transpose_mul_vec(&x);
        self.function.evaluate(&z)
    }

    /// True optimal value. Every base function attains 0.
    pub fn optimum_value(&self) -> f64 {
        0.0
    }
}

/// A multitask problem: `K ≥ 2` sub-tasks solved together.
#[derive(Debug, Clone, PartialEq)]
pub struct MtoInstance {
    pub instance_id: String,
    pub shift_level: ShiftLevel,
    pub combination: Vec<BasicFunction>,
    pub sub_tasks: Vec<SubTask>,
}

impl MtoInstance {
    pub fn new(
        instance_id: impl Into<String>,
        shift_level: ShiftLevel,
        combination: Vec<BasicFunction>,
        sub_tasks: Vec<SubTask>,
    ) -> Result<Self> {
        let inst = Self { instance_id: instance_id.into(), shift_level, combination, sub_tasks };
        inst.validate()?;
        Ok(inst)
    }

    pub fn num_tasks(&self) -> usize {
        self.sub_tasks.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sub_tasks.len() < 2 {
            return Err(Error::InvalidInstance(format!(
                "`{}` has {} sub-tasks, need at least 2",
                self.instance_id,
                self.sub_tasks.len()
            )));
        }
        if self.combination.is_empty() {
            return Err(Error::InvalidInstance("empty function combination".into()));
        }
        for t in &self.sub_tasks {
            t.validate()?;
            if !self.combination.contains(&t.function) {
                return Err(Error::InvalidInstance(format!(
                    "sub-task function {} is not in the combination",
                    t.function
                )));
            }
        }
        Ok(())
    }

    fn to_record(&self) -> InstanceRecord {
        InstanceRecord {
            instance_id: self.instance_id.clone(),
            shift_level: self.shift_level,
            combination: self.combination.clone(),
            sub_tasks: self
                .sub_tasks
                .iter()
                .map(|t| SubTaskRecord {
                    function: t.function,
                    dim: t.dim(),
                    lb: t.lb,
                    ub: t.ub,
                    rotation: t.rotation.data().to_vec(),
                    shift: t.shift.clone(),
                })
                .collect(),
        }
    }

    fn from_record(rec: InstanceRecord) -> Result<Self> {
        let sub_tasks = rec
            .sub_tasks
            .into_iter()
            .map(|t| {
                if t.shift.len() != t.dim {
                    return Err(Error::Parse(format!(
                        "shift has {} entries, D = {}",
                        t.shift.len(),
                        t.dim
                    )));
                }
                Ok(SubTask {
                    function: t.function,
                    rotation: Matrix::from_vec(t.dim, t.dim, t.rotation)?,
                    shift: t.shift,
                    lb: t.lb,
                    ub: t.ub,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rec.instance_id, rec.shift_level, rec.combination, sub_tasks)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_record())?)
    }

    pub fn from_json(line: &str) -> Result<Self> {
        Self::from_record(serde_json::from_str(line)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceRecord {
    instance_id: String,
    shift_level: ShiftLevel,
    combination: Vec<BasicFunction>,
    sub_tasks: Vec<SubTaskRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SubTaskRecord {
    function: BasicFunction,
    #[serde(rename = "D")]
    dim: usize,
    lb: f64,
    ub: f64,
    rotation: Vec<f64>,
    shift: Vec<f64>,
}

/// All 127 non-empty subsets of the base functions, by size and then
/// lexicographically over function order.
pub fn enumerate_combinations() -> Vec<Vec<BasicFunction>> {
    let n = BasicFunction::ALL.len();
    let mut subsets: Vec<Vec<usize>> = (1u32..(1 << n))
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    subsets
        .into_iter()
        .map(|s| s.into_iter().map(|i| BasicFunction::ALL[i]).collect())
        .collect()
}

/// Draws one instance for `combination`; each sub-task picks its function
/// from the combination with replacement and gets a fresh rotation and shift.
pub fn generate_instance<R: Rng + ?Sized>(
    instance_id: impl Into<String>,
    combination: &[BasicFunction],
    level: ShiftLevel,
    tasks: usize,
    dim: usize,
    rng: &mut R,
) -> Result<MtoInstance> {
    let sub_tasks = (0..tasks)
        .map(|_| {
            let function = *combination.choose(rng).expect("non-empty combination");
            let (lb, ub) = function.bounds();
            let rotation = make_rotation(dim, rng);
            let shift = make_shift(level.factor(), lb, ub, dim, rng);
            SubTask { function, rotation, shift, lb, ub }
        })
        .collect();
    MtoInstance::new(instance_id, level, combination.to_vec(), sub_tasks)
}

/// The full problem set for one shift level: one instance per combination.
pub fn generate_awcci(level: ShiftLevel, seed: u64, tasks: usize, dim: usize) -> Result<Vec<MtoInstance>> {
    let level_seed = seeds::derive(seed, level.index() as u64);
    enumerate_combinations()
        .iter()
        .enumerate()
        .map(|(i, combo)| {
            let mut rng = seeds::rng_from(seeds::derive(level_seed, i as u64));
            generate_instance(format!("{}-{i:03}", level.code()), combo, level, tasks, dim, &mut rng)
        })
        .collect()
}

/// Writes one JSON document per line.
pub fn write_dataset(path: impl AsRef<Path>, instances: &[MtoInstance]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for inst in instances {
        writeln!(out, "{}", inst.to_json()?)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<MtoInstance>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            MtoInstance::from_json(&line)
                .map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?,
        );
    }
    Ok(out)
}
