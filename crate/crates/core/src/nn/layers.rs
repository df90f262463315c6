//! Layer building blocks on top of [`Tape`].
//!
//! Parameter names follow `<layer>.weight` / `<layer>.bias` for dense
//! layers, `<block>.query|key|value` for attention and
//! `<block>.scale|offset` for batch normalization.

use rand::Rng;

use super::matrix::Matrix;
use super::params::ParamSet;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    SoftmaxRows,
}

pub fn init_dense<R: Rng + ?Sized>(
    params: &mut ParamSet,
    layer: &str,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) {
    params.insert_uniform(format!("{layer}.weight"), fan_in, fan_out, fan_in, rng);
    params.insert_uniform(format!("{layer}.bias"), 1, fan_out, fan_in, rng);
}

/// Projections for single-head attention of width `dim`, no biases.
pub fn init_attention<R: Rng + ?Sized>(params: &mut ParamSet, block: &str, dim: usize, rng: &mut R) {
    for proj in ["query", "key", "value"] {
        params.insert_uniform(format!("{block}.{proj}"), dim, dim, dim, rng);
    }
}

pub fn init_batch_norm(params: &mut ParamSet, block: &str, dim: usize) {
    params.insert(format!("{block}.scale"), Matrix::filled(1, dim, 1.0));
    params.insert(format!("{block}.offset"), Matrix::zeros(1, dim));
}

/// `y = xW + b`
pub fn dense(tape: &mut Tape, params: &ParamSet, layer: &str, x: Var) -> Result<Var> {
    let w = tape.param(params, &format!("{layer}.weight"))?;
    let b = tape.param(params, &format!("{layer}.bias"))?;
    let xw = tape.matmul(x, w)?;
    tape.add_bias(xw, b)
}

pub fn activation(tape: &mut Tape, kind: Activation, x: Var) -> Var {
    match kind {
        Activation::Tanh => tape.tanh(x),
        Activation::Relu => tape.relu(x),
        Activation::SoftmaxRows => tape.softmax_rows(x),
    }
}

/// Single-head scaled dot-product attention over the rows of `e`.
///
/// Returns the pre-softmax score matrix `QKᵀ/√d` and the attended values
/// `softmax(scores)·V`.
pub fn single_head_attention(
    tape: &mut Tape,
    params: &ParamSet,
    block: &str,
    e: Var,
) -> Result<(Var, Var)> {
    let rows = tape.value(e).rows();
    if rows < 2 {
        return Err(Error::InvalidInstance(format!("attention needs at least 2 rows, got {rows}")));
    }
    let wq = tape.param(params, &format!("{block}.query"))?;
    let wk = tape.param(params, &format!("{block}.key"))?;
    let wv = tape.param(params, &format!("{block}.value"))?;
    let q = tape.matmul(e, wq)?;
    let k = tape.matmul(e, wk)?;
    let v = tape.matmul(e, wv)?;
    let width = tape.value(wk).cols() as f64;
    let kt = tape.transpose(k);
    let raw = tape.matmul(q, kt)?;
    let scores = tape.scale(raw, 1.0 / width.sqrt());
    let weights = tape.softmax_rows(scores);
    let out = tape.matmul(weights, v)?;
    Ok((scores, out))
}

/// Batch normalization over rows with learnable per-column scale and offset.
pub fn batch_norm(tape: &mut Tape, params: &ParamSet, block: &str, x: Var) -> Result<Var> {
    let normalized = tape.batch_norm(x)?;
    let scale = tape.param(params, &format!("{block}.scale"))?;
    let offset = tape.param(params, &format!("{block}.offset"))?;
    let scaled = tape.mul_row_broadcast(normalized, scale)?;
    tape.add_bias(scaled, offset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_layer(w: Matrix, b: Matrix) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("l.weight", w);
        p.insert("l.bias", b);
        p
    }

    #[test]
    fn dense_identity() {
        let p = one_layer(Matrix::identity(3), Matrix::zeros(1, 3));
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::row_vector(&[1.0, 2.0, 3.0]));
        let y = dense(&mut tape, &p, "l", x).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn dense_zero_weights_gives_bias() {
        let p = one_layer(Matrix::zeros(3, 2), Matrix::row_vector(&[0.5, 0.5]));
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::row_vector(&[7.0, -2.0, 3.0]));
        let y = dense(&mut tape, &p, "l", x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn dense_matches_hand_product() {
        let w = Matrix::from_rows(&[vec![0.2, -0.4], vec![0.7, 0.1], vec![-0.3, 0.9]]).unwrap();
        let p = one_layer(w, Matrix::row_vector(&[0.05, -0.05]));
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::row_vector(&[1.5, -1.0, 2.0]));
        let y = dense(&mut tape, &p, "l", x).unwrap();
        let expect = [
            1.5 * 0.2 + -1.0 * 0.7 + 2.0 * -0.3 + 0.05,
            1.5 * -0.4 + -1.0 * 0.1 + 2.0 * 0.9 - 0.05,
        ];
        for (a, b) in tape.value(y).data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn dense_shape_mismatch() {
        let p = one_layer(Matrix::zeros(3, 2), Matrix::zeros(1, 2));
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::row_vector(&[1.0, 2.0]));
        assert!(matches!(dense(&mut tape, &p, "l", x), Err(Error::Dimension(_))));
    }

    #[test]
    fn activations() {
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::row_vector(&[-1.0, 2.0]));
        let r = activation(&mut tape, Activation::Relu, x);
        assert_eq!(tape.value(r).data(), &[0.0, 2.0]);
        let z = tape.constant(Matrix::scalar(0.0));
        let t = activation(&mut tape, Activation::Tanh, z);
        assert_eq!(tape.value(t).item(), 0.0);
        let u = tape.constant(Matrix::zeros(1, 4));
        let s = activation(&mut tape, Activation::SoftmaxRows, u);
        assert_eq!(tape.value(s).data(), &[0.25; 4]);
    }

    #[test]
    fn attention_by_hand_at_width_two() {
        let mut p = ParamSet::new();
        p.insert("a.query", Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap());
        p.insert("a.key", Matrix::from_rows(&[vec![0.5, 1.0], vec![1.0, 0.0]]).unwrap());
        p.insert("a.value", Matrix::identity(2));
        let mut tape = Tape::new();
        let e = tape.constant(Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        let (scores, out) = single_head_attention(&mut tape, &p, "a", e).unwrap();
        // Q = [[1,0],[0,2]], K = [[0.5,1],[1,0]]
        let s = 1.0 / 2f64.sqrt();
        let expect = [0.5 * s, 1.0 * s, 2.0 * s, 0.0];
        for (a, b) in tape.value(scores).data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        // V = e, so each output row is the softmax row itself
        let row0_p1 = 1.0 / (1.0 + (0.5 * s).exp());
        assert!((tape.value(out)[(0, 0)] - row0_p1).abs() < 1e-15);
    }

    #[test]
    fn attention_on_identical_rows_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = ParamSet::new();
        init_attention(&mut p, "a", 4, &mut rng);
        let mut tape = Tape::new();
        let e = tape.constant(Matrix::from_rows(&vec![vec![0.3, -0.1, 0.8, 0.2]; 3]).unwrap());
        let (scores, _) = single_head_attention(&mut tape, &p, "a", e).unwrap();
        let s = tape.value(scores);
        for r in 0..3 {
            for c in 0..3 {
                assert!((s[(r, c)] - s[(r, 0)]).abs() < 1e-15);
            }
        }
        let w = tape.softmax_rows(scores);
        assert!(tape.value(w).data().iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn attention_rejects_single_row() {
        let mut p = ParamSet::new();
        init_attention(&mut p, "a", 2, &mut ChaCha8Rng::seed_from_u64(0));
        let mut tape = Tape::new();
        let e = tape.constant(Matrix::zeros(1, 2));
        assert!(matches!(
            single_head_attention(&mut tape, &p, "a", e),
            Err(Error::InvalidInstance(_))
        ));
    }

    #[test]
    fn batch_norm_examples() {
        let mut p = ParamSet::new();
        init_batch_norm(&mut p, "bn", 2);
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::from_rows(&[vec![1.0, 4.0], vec![3.0, 4.0]]).unwrap());
        let y = batch_norm(&mut tape, &p, "bn", x).unwrap();
        let y = tape.value(y);
        let scale = 1.0 / (1.0 + 1e-5f64).sqrt();
        assert!((y[(0, 0)] + scale).abs() < 1e-15);
        assert!((y[(1, 0)] - scale).abs() < 1e-15);
        assert_eq!(y[(0, 1)], 0.0);
        assert_eq!(y[(1, 1)], 0.0);

        let single = tape.constant(Matrix::zeros(1, 2));
        assert!(matches!(batch_norm(&mut tape, &p, "bn", single), Err(Error::InvalidInstance(_))));
    }
}
