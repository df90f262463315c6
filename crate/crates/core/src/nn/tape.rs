//! Reverse-mode differentiation over whole-matrix operations.
//!
//! A [`Tape`] records every intermediate value of one forward pass.
//! [`Tape::backward`] walks the record in reverse and accumulates
//! `∂loss/∂parameter` into the [`ParamSet`] the parameters were read from.
//! Tapes are cheap and meant to be rebuilt for every forward pass.

use std::collections::HashMap;

use super::matrix::Matrix;
use super::params::ParamSet;
use crate::error::{Error, Result};

/// Value substituted for masked logits. `exp` of it underflows to exactly 0.
pub const MASKED_LOGIT: f64 = -1e30;

/// Stabilizer added to the batch variance.
pub const BATCH_NORM_EPS: f64 = 1e-5;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(String),
    MatMul(Var, Var),
    AddBias(Var, Var),
    MulRowBroadcast(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Minimum(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    MaskDiagonal(Var),
    Transpose(Var),
    BatchNorm { input: Var, normalized: Matrix, inv_std: Vec<f64> },
    MeanRows(Var),
    SumRows(Var),
    Sum(Var),
    GatherRows(Var, Vec<usize>),
    ConcatCols(Var, Var),
    PickPerRow(Var, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
}

fn same_shape(what: &str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Which side of every kink (ReLU, clamp bounds, minimum) each entry sits
    /// on. Two passes with equal patterns evaluate the same smooth branch.
    pub fn branch_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(a) => out.extend(self.value(*a).data().iter().map(|&x| x > 0.0)),
                Op::Clamp(a, lo, hi) => {
                    for &x in self.value(*a).data() {
                        out.push(x >= *lo);
                        out.push(x <= *hi);
                    }
                }
                Op::Minimum(a, b) => {
                    out.extend(self.value(*a).data().iter().zip(self.value(*b).data()).map(|(x, y)| x <= y))
                }
                _ => {}
            }
        }
        out
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant)
    }

    /// Reads a named parameter onto the tape. Repeated reads share one node.
    pub fn param(&mut self, params: &ParamSet, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = params
            .value(name)
            .ok_or_else(|| Error::Dimension(format!("unknown parameter `{name}`")))?
            .clone();
        let v = self.push(value, Op::Param(name.to_owned()));
        self.params.insert(name.to_owned(), v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// Adds a `1×n` row to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let value = broadcast_rows(self.value(a), self.value(bias), |x, b| x + b)?;
        Ok(self.push(value, Op::AddBias(a, bias)))
    }

    /// Multiplies every row of `a` elementwise by a `1×n` row.
    pub fn mul_row_broadcast(&mut self, a: Var, row: Var) -> Result<Var> {
        let value = broadcast_rows(self.value(a), self.value(row), |x, b| x * b)?;
        Ok(self.push(value, Op::MulRowBroadcast(a, row)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.value(a), self.value(b))?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("sub", self.value(a), self.value(b))?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("mul", self.value(a), self.value(b))?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(value, Op::Mul(a, b)))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("minimum", self.value(a), self.value(b))?;
        let value = self.value(a).zip_map(self.value(b), f64::min);
        Ok(self.push(value, Op::Minimum(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|x| x * factor);
        self.push(value, Op::Scale(a, factor))
    }

    pub fn add_scalar(&mut self, a: Var, offset: f64) -> Var {
        let value = self.value(a).map(|x| x + offset);
        self.push(value, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        self.push(value, Op::Exp(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        self.push(value, Op::Square(a))
    }

    /// Clamps into `[lo, hi]`; the gradient passes where `lo <= x <= hi`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(value, Op::Clamp(a, lo, hi))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let value = softmax_rows(self.value(a));
        self.push(value, Op::SoftmaxRows(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let value = log_softmax_rows(self.value(a));
        self.push(value, Op::LogSoftmaxRows(a))
    }

    /// Replaces the diagonal of a square matrix with [`MASKED_LOGIT`].
    pub fn mask_diagonal(&mut self, a: Var) -> Result<Var> {
        let mut value = self.value(a).clone();
        if value.rows() != value.cols() {
            return Err(Error::Dimension("mask_diagonal needs a square matrix".into()));
        }
        for i in 0..value.rows() {
            value[(i, i)] = MASKED_LOGIT;
        }
        Ok(self.push(value, Op::MaskDiagonal(a)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    /// Column-wise standardization using the statistics of the rows present.
    pub fn batch_norm(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (rows, cols) = x.shape();
        if rows < 2 {
            return Err(Error::InvalidInstance(format!(
                "batch normalization needs at least 2 rows, got {rows}"
            )));
        }
        let n = rows as f64;
        let mut normalized = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(cols);
        for c in 0..cols {
            let mean = (0..rows).map(|r| x[(r, c)]).sum::<f64>() / n;
            let var = (0..rows).map(|r| (x[(r, c)] - mean).powi(2)).sum::<f64>() / n;
            let inv = 1.0 / (var + BATCH_NORM_EPS).sqrt();
            for r in 0..rows {
                normalized[(r, c)] = (x[(r, c)] - mean) * inv;
            }
            inv_std.push(inv);
        }
        let value = normalized.clone();
        Ok(self.push(value, Op::BatchNorm { input: a, normalized, inv_std }))
    }

    /// `K×n -> 1×n` column means.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = Matrix::zeros(1, x.cols());
        for r in 0..x.rows() {
            for (o, v) in out.row_mut(0).iter_mut().zip(x.row(r)) {
                *o += v;
            }
        }
        let n = x.rows() as f64;
        let value = out.map(|v| v / n);
        self.push(value, Op::MeanRows(a))
    }

    /// `K×n -> K×1` row sums.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let data = (0..x.rows()).map(|r| x.row(r).iter().sum()).collect();
        let value = Matrix::from_vec(x.rows(), 1, data).expect("row sums");
        self.push(value, Op::SumRows(a))
    }

    /// Sum of every entry, as a `1×1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).data().len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let x = self.value(a);
        if let Some(&bad) = index.iter().find(|&&i| i >= x.rows()) {
            return Err(Error::Dimension(format!("row {bad} out of {}", x.rows())));
        }
        let mut data = Vec::with_capacity(index.len() * x.cols());
        for &i in index {
            data.extend_from_slice(x.row(i));
        }
        let value = Matrix::from_vec(index.len(), x.cols(), data)?;
        Ok(self.push(value, Op::GatherRows(a, index.to_vec())))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.rows() != y.rows() {
            return Err(Error::Dimension(format!(
                "concat: {} rows vs {} rows",
                x.rows(),
                y.rows()
            )));
        }
        let mut data = Vec::with_capacity(x.rows() * (x.cols() + y.cols()));
        for r in 0..x.rows() {
            data.extend_from_slice(x.row(r));
            data.extend_from_slice(y.row(r));
        }
        let value = Matrix::from_vec(x.rows(), x.cols() + y.cols(), data)?;
        Ok(self.push(value, Op::ConcatCols(a, b)))
    }

    /// `out[r] = a[r, index[r]]`, shaped `K×1`.
    pub fn pick_per_row(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let x = self.value(a);
        if index.len() != x.rows() || index.iter().any(|&c| c >= x.cols()) {
            return Err(Error::Dimension("pick_per_row index out of range".into()));
        }
        let data = index.iter().enumerate().map(|(r, &c)| x[(r, c)]).collect();
        let value = Matrix::from_vec(x.rows(), 1, data)?;
        Ok(self.push(value, Op::PickPerRow(a, index.to_vec())))
    }

    /// Propagates `∂loss/∂·` back through the tape and adds the parameter
    /// gradients into `params`.
    pub fn backward(&self, loss: Var, params: &mut ParamSet) -> Result<()> {
        for (name, grad) in self.gradients(loss)? {
            params.accumulate_grad(&name, &grad)?;
        }
        Ok(())
    }

    /// Parameter gradients of `loss` without touching any [`ParamSet`].
    pub fn gradients(&self, loss: Var) -> Result<Vec<(String, Matrix)>> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Matrix::scalar(1.0));
        let mut out = Vec::new();

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            let y = &node.value;
            let val = |v: Var| &self.nodes[v.0].value;
            let mut send = |v: Var, grad: Matrix| match &mut adj[v.0] {
                Some(acc) => acc.add_assign(&grad),
                slot @ None => *slot = Some(grad),
            };
            match &node.op {
                Op::Constant => {}
                Op::Param(name) => out.push((name.clone(), g)),
                Op::MatMul(a, b) => {
                    send(*a, g.matmul(&val(*b).transpose())?);
                    send(*b, val(*a).transpose().matmul(&g)?);
                }
                Op::AddBias(a, b) => {
                    send(*b, column_sums(&g));
                    send(*a, g);
                }
                Op::MulRowBroadcast(a, b) => {
                    let row = val(*b).row(0).to_vec();
                    let x = val(*a);
                    let mut db = Matrix::zeros(1, row.len());
                    let mut da = g.clone();
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            db[(0, c)] += g[(r, c)] * x[(r, c)];
                            da[(r, c)] *= row[c];
                        }
                    }
                    send(*a, da);
                    send(*b, db);
                }
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::Sub(a, b) => {
                    send(*a, g.clone());
                    send(*b, g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    send(*a, g.zip_map(val(*b), |g, y| g * y));
                    send(*b, g.zip_map(val(*a), |g, x| g * x));
                }
                Op::Minimum(a, b) => {
                    let (xa, xb) = (val(*a), val(*b));
                    let mut ga = g.clone();
                    let mut gb = g;
                    for i in 0..ga.data().len() {
                        if xa.data()[i] <= xb.data()[i] {
                            gb.data_mut()[i] = 0.0;
                        } else {
                            ga.data_mut()[i] = 0.0;
                        }
                    }
                    send(*a, ga);
                    send(*b, gb);
                }
                Op::Scale(a, factor) => send(*a, g.map(|x| x * factor)),
                Op::AddScalar(a) => send(*a, g),
                Op::Tanh(a) => send(*a, g.zip_map(y, |g, t| g * (1.0 - t * t))),
                Op::Relu(a) => send(*a, g.zip_map(val(*a), |g, x| if x > 0.0 { g } else { 0.0 })),
                Op::Exp(a) => send(*a, g.zip_map(y, |g, e| g * e)),
                Op::Square(a) => send(*a, g.zip_map(val(*a), |g, x| 2.0 * x * g)),
                Op::Clamp(a, lo, hi) => send(
                    *a,
                    g.zip_map(val(*a), |g, x| if x >= *lo && x <= *hi { g } else { 0.0 }),
                ),
                Op::SoftmaxRows(a) => {
                    let mut da = Matrix::zeros(g.rows(), g.cols());
                    for r in 0..g.rows() {
                        let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(g, p)| g * p).sum();
                        for c in 0..g.cols() {
                            da[(r, c)] = y[(r, c)] * (g[(r, c)] - dot);
                        }
                    }
                    send(*a, da);
                }
                Op::LogSoftmaxRows(a) => {
                    let mut da = Matrix::zeros(g.rows(), g.cols());
                    for r in 0..g.rows() {
                        let total: f64 = g.row(r).iter().sum();
                        for c in 0..g.cols() {
                            da[(r, c)] = g[(r, c)] - y[(r, c)].exp() * total;
                        }
                    }
                    send(*a, da);
                }
                Op::MaskDiagonal(a) => {
                    let mut da = g;
                    for i in 0..da.rows() {
                        da[(i, i)] = 0.0;
                    }
                    send(*a, da);
                }
                Op::Transpose(a) => send(*a, g.transpose()),
                Op::BatchNorm { input, normalized, inv_std } => {
                    let (rows, cols) = g.shape();
                    let n = rows as f64;
                    let mut da = Matrix::zeros(rows, cols);
                    for c in 0..cols {
                        let sum_g: f64 = (0..rows).map(|r| g[(r, c)]).sum();
                        let sum_gx: f64 = (0..rows).map(|r| g[(r, c)] * normalized[(r, c)]).sum();
                        for r in 0..rows {
                            da[(r, c)] = inv_std[c] / n
                                * (n * g[(r, c)] - sum_g - normalized[(r, c)] * sum_gx);
                        }
                    }
                    send(*input, da);
                }
                Op::MeanRows(a) => {
                    let rows = val(*a).rows();
                    let mut da = Matrix::zeros(rows, g.cols());
                    for r in 0..rows {
                        for (d, gv) in da.row_mut(r).iter_mut().zip(g.row(0)) {
                            *d = gv / rows as f64;
                        }
                    }
                    send(*a, da);
                }
                Op::SumRows(a) => {
                    let x = val(*a);
                    let mut da = Matrix::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        da.row_mut(r).fill(g[(r, 0)]);
                    }
                    send(*a, da);
                }
                Op::Sum(a) => {
                    let (rows, cols) = val(*a).shape();
                    send(*a, Matrix::filled(rows, cols, g.item()));
                }
                Op::GatherRows(a, index) => {
                    let x = val(*a);
                    let mut da = Matrix::zeros(x.rows(), x.cols());
                    for (i, &src) in index.iter().enumerate() {
                        for (d, gv) in da.row_mut(src).iter_mut().zip(g.row(i)) {
                            *d += gv;
                        }
                    }
                    send(*a, da);
                }
                Op::ConcatCols(a, b) => {
                    let left = val(*a).cols();
                    let right = val(*b).cols();
                    let mut ga = Matrix::zeros(g.rows(), left);
                    let mut gb = Matrix::zeros(g.rows(), right);
                    for r in 0..g.rows() {
                        ga.row_mut(r).copy_from_slice(&g.row(r)[..left]);
                        gb.row_mut(r).copy_from_slice(&g.row(r)[left..]);
                    }
                    send(*a, ga);
                    send(*b, gb);
                }
                Op::PickPerRow(a, index) => {
                    let x = val(*a);
                    let mut da = Matrix::zeros(x.rows(), x.cols());
                    for (r, &c) in index.iter().enumerate() {
                        da[(r, c)] = g[(r, 0)];
                    }
                    send(*a, da);
                }
            }
        }
        Ok(out)
    }
}

fn broadcast_rows(a: &Matrix, row: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
    if row.rows() != 1 || row.cols() != a.cols() {
        return Err(Error::Dimension(format!(
            "cannot broadcast {:?} over {:?}",
            row.shape(),
            a.shape()
        )));
    }
    let mut out = a.clone();
    for r in 0..out.rows() {
        for (o, &b) in out.row_mut(r).iter_mut().zip(row.row(0)) {
            *o = f(*o, b);
        }
    }
    Ok(out)
}

fn column_sums(g: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, g.cols());
    for r in 0..g.rows() {
        for (o, v) in out.row_mut(0).iter_mut().zip(g.row(r)) {
            *o += v;
        }
    }
    out
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

pub fn log_softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}
