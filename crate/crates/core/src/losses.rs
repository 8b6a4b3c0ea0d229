//! Classification, closeness and disparity losses and their weighted total.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Reduction, Tape, TensorId};

/// Weights `(lambda, beta, gamma)` of the classification, closeness and
/// disparity terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            beta: 5e-4,
            gamma: 1e-3,
        }
    }
}

impl LossWeights {
    pub fn new(lambda: f64, beta: f64, gamma: f64) -> Result<Self> {
        let w = Self {
            lambda,
            beta,
            gamma,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let non_negative = |v: f64| v >= 0.0;
        if !(self.lambda.is_finite() && self.lambda > 0.0 && non_negative(self.beta) && non_negative(self.gamma)) {
            return Err(Error::InvalidConfig(format!(
                "loss weights need lambda > 0 and beta, gamma >= 0 (got {}, {}, {})",
                self.lambda, self.beta, self.gamma
            )));
        }
        Ok(())
    }
}

/// `||S_T - S_F||_F^2` where `S = Z_nor Z_nor^T` and `Z_nor` has unit rows.
///
/// With `normalized` the result is divided by `N^2`.
pub fn closeness_loss(tape: &mut Tape, z_ct: TensorId, z_cf: TensorId, normalized: bool) -> Result<TensorId> {
    let (a, b) = (tape.value(z_ct).shape(), tape.value(z_cf).shape());
    if a != b {
        return Err(Error::ShapeMismatch {
            op: "closeness_loss",
            left: a,
            right: b,
        });
    }
    let nt = tape.l2_normalize_rows(z_ct)?;
    let nf = tape.l2_normalize_rows(z_cf)?;
    let s_t = tape.gram(nt);
    let s_f = tape.gram(nf);
    let loss = tape.frobenius_sq_diff(s_t, s_f)?;
    if normalized {
        let n = a.0 as f64;
        Ok(tape.scale(loss, 1.0 / (n * n)))
    } else {
        Ok(loss)
    }
}

/// `-(1/N) sum_i [cos(z_t_i, z_ct_i) + cos(z_f_i, z_cf_i)]`, in `[-2, 2]`.
pub fn disparity_loss(
    tape: &mut Tape,
    z_t: TensorId,
    z_ct: TensorId,
    z_f: TensorId,
    z_cf: TensorId,
) -> Result<TensorId> {
    let topo = tape.mean_row_cosine(z_t, z_ct)?;
    let feat = tape.mean_row_cosine(z_f, z_cf)?;
    tape.add_scaled(topo, feat, -1.0, -1.0)
}

/// `-sum_{v in train} sum_c Y_vc ln Y^_vc` (or its mean with [`Reduction::Mean`]).
pub fn classification_loss(
    tape: &mut Tape,
    y_hat: TensorId,
    y_onehot: &Matrix,
    train_mask: &[usize],
    reduction: Reduction,
) -> Result<TensorId> {
    tape.masked_cross_entropy(y_hat, y_onehot, train_mask, reduction)
}

/// `lambda L_cl + beta L_c + gamma L_d`.
pub fn total_loss(
    tape: &mut Tape,
    l_cl: TensorId,
    l_c: TensorId,
    l_d: TensorId,
    w: &LossWeights,
) -> Result<TensorId> {
    let partial = tape.add_scaled(l_cl, l_c, w.lambda, w.beta)?;
    tape.add_scaled(partial, l_d, 1.0, w.gamma)
}
