use serde::{Deserialize, Serialize};

use crate::model::{ParamKind, ParamStore};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Matrix,
    pub v: Matrix,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
        }
    }
}

/// One bias-corrected Adam update at step `t` (1-based). Weights are first
/// shrunk by `lr * weight_decay` (decoupled decay); biases are not.
pub fn adam_step(
    param: &mut Matrix,
    grad: &Matrix,
    state: &mut AdamState,
    kind: ParamKind,
    cfg: &AdamConfig,
    t: u32,
) {
    debug_assert!(t >= 1);
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    let decay = match kind {
        ParamKind::Weight => cfg.lr * cfg.weight_decay,
        ParamKind::Bias => 0.0,
    };
    let p = param.as_mut_slice();
    let m = state.m.as_mut_slice();
    let v = state.v.as_mut_slice();
    for (i, &g) in grad.as_slice().iter().enumerate() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        p[i] -= decay * p[i];
        p[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// Adam over every tensor of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    states: Vec<AdamState>,
    t: u32,
}

impl Adam {
    pub fn new(store: &ParamStore, cfg: AdamConfig) -> Self {
        let states = store
            .iter()
            .map(|p| AdamState::new(p.value.rows(), p.value.cols()))
            .collect();
        Self { cfg, states, t: 0 }
    }

    pub fn steps(&self) -> u32 {
        self.t
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[Matrix]) {
        assert_eq!(grads.len(), self.states.len());
        self.t += 1;
        for ((p, g), s) in store.iter_mut().zip(grads).zip(&mut self.states) {
            adam_step(&mut p.value, g, s, p.kind, &self.cfg, self.t);
        }
    }
}
