//! Central finite-difference checks of tape gradients.

use rand::seq::index;
use rand::Rng;

use super::{ParamSet, Tape, Var};
use crate::error::{Error, Result};

pub const STEP: f64 = 1e-5;
/// Floor on the denominator of the relative error so entries whose true
/// gradient is zero are compared absolutely.
pub const REL_ERR_FLOOR: f64 = 1e-5;

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(REL_ERR_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    /// Analytic and numeric derivative at the worst entry.
    pub worst_pair: (f64, f64),
    pub entries_checked: usize,
    /// Entries skipped because a perturbation crossed a kink, where the
    /// finite difference does not estimate the derivative.
    pub kinks_skipped: usize,
}

fn missing(name: &str) -> Error {
    Error::Contract(format!("unknown parameter {name}"))
}

fn lookup<'a>(params: &'a ParamSet, name: &str) -> Result<&'a super::Matrix> {
    params.value(name).ok_or_else(|| missing(name))
}

/// Which entries of each parameter to perturb.
#[derive(Debug, Clone, Copy)]
pub enum Coverage {
    All,
    /// At most this many entries per parameter, chosen at random.
    Sample(usize),
}

/// Compares analytic gradients of the scalar built by `build` with central
/// differences of step [`STEP`] for the parameters in `names`. Entries whose
/// perturbation flips a ReLU, clamp or minimum branch are counted in
/// `kinks_skipped` instead of being compared.
pub fn check_gradients<R: Rng + ?Sized>(
    params: &ParamSet,
    names: &[&str],
    coverage: Coverage,
    rng: &mut R,
    build: &dyn Fn(&mut Tape, &ParamSet) -> Result<Var>,
) -> Result<GradCheckReport> {
    let mut tape = Tape::new();
    let loss = build(&mut tape, params)?;
    let analytic = tape.gradients(loss)?;
    let base_pattern = tape.branch_pattern();
    let eval = |p: &ParamSet| -> Result<(f64, bool)> {
        let mut t = Tape::new();
        let l = build(&mut t, p)?;
        Ok((t.value(l).item(), t.branch_pattern() == base_pattern))
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        worst_pair: (0.0, 0.0),
        entries_checked: 0,
        kinks_skipped: 0,
    };
    let mut probe = params.clone();
    for &name in names {
        let n = lookup(params, name)?.data().len();
        let picks: Vec<usize> = match coverage {
            Coverage::All => (0..n).collect(),
            Coverage::Sample(m) if m >= n => (0..n).collect(),
            Coverage::Sample(m) => index::sample(rng, n, m).into_vec(),
        };
        let grad = analytic.iter().find(|(g, _)| g == name).map(|(_, g)| g);
        for i in picks {
            let original = lookup(params, name)?.data()[i];
            probe.value_mut(name).ok_or_else(|| missing(name))?.data_mut()[i] = original + STEP;
            let (up, up_same) = eval(&probe)?;
            probe.value_mut(name).ok_or_else(|| missing(name))?.data_mut()[i] = original - STEP;
            let (down, down_same) = eval(&probe)?;
            probe.value_mut(name).ok_or_else(|| missing(name))?.data_mut()[i] = original;
            if !(up_same && down_same) {
                report.kinks_skipped += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * STEP);
            let exact = grad.map_or(0.0, |g| g.data()[i]);
            let err = relative_error(exact, numeric);
            report.entries_checked += 1;
            if err > report.max_rel_err || report.worst_param.is_empty() {
                report.max_rel_err = err;
                report.worst_param = name.to_owned();
                report.worst_index = i;
                report.worst_pair = (exact, numeric);
            }
        }
    }
    Ok(report)
}
