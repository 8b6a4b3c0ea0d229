use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tape, TensorId};

/// Weights receive decoupled weight decay; biases do not.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub value: Matrix,
}

/// Indices of an affine layer's tensors in the flat parameter list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearSlot {
    pub weight: usize,
    pub bias: Option<usize>,
}

/// A stack of affine layers with ReLU between consecutive layers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSlots {
    pub layers: Vec<LinearSlot>,
}

/// Flat parameter storage plus the layout that says which tensor is which.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, i: usize) -> &Param {
        &self.params[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn values(&self) -> Vec<Matrix> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    /// Replaces every value; shapes must match the current ones.
    pub fn set_values(&mut self, values: Vec<Matrix>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} parameter tensors, got {}",
                self.params.len(),
                values.len()
            )));
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            if p.value.shape() != v.shape() {
                return Err(Error::ShapeMismatch {
                    op: "set_values",
                    left: p.value.shape(),
                    right: v.shape(),
                });
            }
            p.value = v;
        }
        Ok(())
    }

    /// Records every parameter as a leaf, in storage order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<TensorId> {
        self.params.iter().map(|p| tape.leaf(p.value.clone())).collect()
    }
}

/// Allocates parameters with Glorot-uniform weights and zero biases.
pub(crate) struct ParamBuilder<'r, R: Rng> {
    params: Vec<Param>,
    rng: &'r mut R,
}

impl<'r, R: Rng> ParamBuilder<'r, R> {
    pub(crate) fn new(rng: &'r mut R) -> Self {
        Self {
            params: Vec::new(),
            rng,
        }
    }

    pub(crate) fn weight(&mut self, name: &str, fan_in: usize, fan_out: usize) -> usize {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let value = Matrix::uniform(fan_in, fan_out, limit, self.rng);
        self.push(name, ParamKind::Weight, value)
    }

    pub(crate) fn bias(&mut self, name: &str, width: usize) -> usize {
        self.push(name, ParamKind::Bias, Matrix::zeros(1, width))
    }

    pub(crate) fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> LinearSlot {
        LinearSlot {
            weight: self.weight(&format!("{name}.weight"), fan_in, fan_out),
            bias: Some(self.bias(&format!("{name}.bias"), fan_out)),
        }
    }

    /// `widths = [in, hidden.., out]`.
    pub(crate) fn mlp(&mut self, name: &str, widths: &[usize]) -> MlpSlots {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| self.linear(&format!("{name}.{i}"), w[0], w[1]))
            .collect();
        MlpSlots { layers }
    }

    fn push(&mut self, name: &str, kind: ParamKind, value: Matrix) -> usize {
        self.params.push(Param {
            name: name.to_string(),
            kind,
            value,
        });
        self.params.len() - 1
    }

    pub(crate) fn finish(self) -> ParamStore {
        ParamStore {
            params: self.params,
        }
    }
}

/// `x W + b`.
pub fn linear_forward(
    tape: &mut Tape,
    ids: &[TensorId],
    slot: &LinearSlot,
    x: TensorId,
) -> Result<TensorId> {
    let xw = tape.matmul(x, ids[slot.weight])?;
    match slot.bias {
        Some(b) => tape.add_row(xw, ids[b]),
        None => Ok(xw),
    }
}

/// Affine layers with ReLU in between; the last layer is left linear.
pub fn mlp_forward(
    tape: &mut Tape,
    ids: &[TensorId],
    slots: &MlpSlots,
    x: TensorId,
) -> Result<TensorId> {
    let mut h = x;
    for (i, layer) in slots.layers.iter().enumerate() {
        if i > 0 {
            h = tape.relu(h);
        }
        h = linear_forward(tape, ids, layer, h)?;
    }
    Ok(h)
}
