use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tape, TensorId};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub eps: f64,
    /// Maximum accepted relative error.
    pub tolerance: f64,
    /// Lower bound on the relative-error denominator, so coordinates whose
    /// true gradient is ~0 are judged by absolute error instead.
    pub denom_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            tolerance: 1e-4,
            denom_floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamCheck {
    pub index: usize,
    pub shape: (usize, usize),
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Flat index of the coordinate with the largest relative error.
    pub worst: usize,
    pub analytic_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

/// Compares tape gradients of the scalar built by `f` against central
/// differences `(f(θ + eps) - f(θ - eps)) / (2 eps)`, one coordinate at a time.
///
/// `f` receives a fresh tape and one leaf id per entry of `params`, and must
/// return the id of a 1x1 node.
pub fn finite_diff_check<F>(f: F, params: &[Matrix], cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[TensorId]) -> Result<TensorId>,
{
    let analytic = {
        let mut tape = Tape::new();
        let ids: Vec<TensorId> = params.iter().map(|p| tape.leaf(p.clone())).collect();
        let loss = f(&mut tape, &ids)?;
        tape.backward(loss)?;
        ids.iter().map(|&id| tape.grad(id).clone()).collect::<Vec<_>>()
    };

    let eval = |values: &[Matrix]| -> Result<f64> {
        let mut tape = Tape::new();
        let ids: Vec<TensorId> = values.iter().map(|p| tape.leaf(p.clone())).collect();
        let loss = f(&mut tape, &ids)?;
        let v = tape.value(loss);
        if v.shape() != (1, 1) {
            return Err(Error::NotScalar {
                op: "finite_diff_check",
                shape: v.shape(),
            });
        }
        Ok(v.item())
    };

    let mut work: Vec<Matrix> = params.to_vec();
    let mut checks = Vec::with_capacity(params.len());
    for (index, grad) in analytic.iter().enumerate() {
        let mut check = ParamCheck {
            index,
            shape: grad.shape(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            worst: 0,
            analytic_norm: grad.sum_sq().sqrt(),
        };
        for k in 0..grad.len() {
            let orig = work[index].as_slice()[k];
            work[index].as_mut_slice()[k] = orig + cfg.eps;
            let plus = eval(&work)?;
            work[index].as_mut_slice()[k] = orig - cfg.eps;
            let minus = eval(&work)?;
            work[index].as_mut_slice()[k] = orig;

            let numeric = (plus - minus) / (2.0 * cfg.eps);
            let a = grad.as_slice()[k];
            let rel = relative_error(a, numeric, cfg.denom_floor);
            check.max_abs_error = check.max_abs_error.max((a - numeric).abs());
            if rel > check.max_rel_error {
                check.max_rel_error = rel;
                check.worst = k;
            }
        }
        checks.push(check);
    }
    let max_rel_error = checks.iter().fold(0.0_f64, |m, c| m.max(c.max_rel_error));
    Ok(GradCheckReport {
        params: checks,
        max_rel_error,
        tolerance: cfg.tolerance,
    })
}
