//! Semi-supervised training: stratified splits, Adam, the full-batch loop
//! with early stopping, accuracy / macro-F1, and per-epoch attention norms.

mod adam;
mod metrics;
mod split;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use metrics::{attention_norm_trace, evaluate, evaluate_predictions};
pub use split::{make_split, Split};

use crate::error::{Error, Result};
use crate::graph::{normalized_adjacency, Graph};
use crate::losses::{classification_loss, closeness_loss, disparity_loss, total_loss, LossWeights};
use crate::model::{GraphInputs, ModelConfig, ModelOutput, ModelParams};
use crate::tensor::{finite_diff_check, GradCheckConfig, GradCheckReport, Matrix, Reduction, Tape, TensorId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    /// Neighbours per node in the kNN feature graph.
    pub k: usize,
    pub loss: LossWeights,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Stop after this many epochs without a new best validation accuracy.
    pub patience: usize,
    pub seed: u64,
    pub labels_per_class: usize,
    pub val_per_class: usize,
    pub reduction: Reduction,
    /// Divide the closeness loss by `N^2`.
    pub normalized_closeness: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            k: 7,
            loss: LossWeights::default(),
            lr: 0.01,
            weight_decay: 5e-4,
            epochs: 500,
            patience: 100,
            seed: 0,
            labels_per_class: 40,
            val_per_class: 40,
            reduction: Reduction::Sum,
            normalized_closeness: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.labels_per_class == 0 {
            return bad("labels_per_class must be at least 1");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.lr.is_nan() || self.lr < 0.0 || self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return bad("lr and weight_decay must be non-negative");
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

/// One row of the training trace. Losses and accuracies are measured on the
/// parameters *before* that epoch's update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_cl: f64,
    pub loss_c: f64,
    pub loss_d: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    /// Mean row L2 norm of `alpha_T`, `alpha_F`, `alpha_C`; NaN for baselines.
    pub attn: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub best_epoch: usize,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub test_macro_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<EpochRecord>,
    pub metrics: FinalMetrics,
}

/// Builds the constant forward inputs for a topology graph and its feature graph.
pub fn graph_inputs(g: &Graph, g_f: &Graph) -> Result<GraphInputs> {
    if g.n_nodes() != g_f.n_nodes() {
        return Err(Error::InvalidGraph(format!(
            "topology graph has {} nodes, feature graph {}",
            g.n_nodes(),
            g_f.n_nodes()
        )));
    }
    Ok(GraphInputs {
        topology: Arc::new(normalized_adjacency(g)),
        feature: Arc::new(normalized_adjacency(g_f)),
        x: g.features().clone(),
    })
}

/// Losses of one forward pass, all recorded on the same tape.
#[derive(Clone, Copy, Debug)]
pub struct StepLosses {
    pub total: TensorId,
    pub cl: TensorId,
    pub c: Option<TensorId>,
    pub d: Option<TensorId>,
}

/// Records the training objective for `out`. Baselines only carry the
/// classification term.
pub fn record_losses(
    tape: &mut Tape,
    out: &ModelOutput,
    y_onehot: &Matrix,
    train: &[usize],
    cfg: &TrainConfig,
) -> Result<StepLosses> {
    let cl = classification_loss(tape, out.y_hat(), y_onehot, train, cfg.reduction)?;
    match out.dual() {
        Some(s) => {
            let c = closeness_loss(tape, s.z_ct, s.z_cf, cfg.normalized_closeness)?;
            let d = disparity_loss(tape, s.z_t, s.z_ct, s.z_f, s.z_cf)?;
            let total = total_loss(tape, cl, c, d, &cfg.loss)?;
            Ok(StepLosses {
                total,
                cl,
                c: Some(c),
                d: Some(d),
            })
        }
        None => Ok(StepLosses {
            total: tape.scale(cl, cfg.loss.lambda),
            cl,
            c: None,
            d: None,
        }),
    }
}

/// Checks the tape gradient of the full training objective with respect to
/// every parameter of a fresh model against central differences.
pub fn objective_gradcheck(
    g: &Graph,
    g_f: &Graph,
    train_nodes: &[usize],
    cfg: &TrainConfig,
    check: &GradCheckConfig,
) -> Result<GradCheckReport> {
    cfg.validate()?;
    let y_onehot = g.one_hot_labels()?;
    let inputs = graph_inputs(g, g_f)?;
    let model = ModelParams::init(&cfg.model, g.n_features(), g.n_classes(), derive_seed(cfg.seed, INIT_STREAM))?;
    finite_diff_check(
        |tape, ids| {
            let out = model.forward(tape, ids, &inputs)?;
            Ok(record_losses(tape, &out, &y_onehot, train_nodes, cfg)?.total)
        },
        &model.store.values(),
        check,
    )
}

/// Derives independent RNG streams from the run seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const SPLIT_STREAM: u64 = 1;
pub const INIT_STREAM: u64 = 2;

/// Trains on `g` (topology, labels, features) with the feature graph `g_f`,
/// using the stratified split drawn from `cfg.seed`.
pub fn train(g: &Graph, g_f: &Graph, cfg: &TrainConfig) -> Result<(ModelParams, RunTrace)> {
    let split = make_split(
        g,
        cfg.labels_per_class,
        cfg.val_per_class,
        derive_seed(cfg.seed, SPLIT_STREAM),
    )?;
    train_with_split(g, g_f, &split, cfg)
}

/// Full-batch training on a given split. Returns the parameters of the epoch
/// with the best validation accuracy (earliest on ties; the last epoch when
/// the validation set is empty).
pub fn train_with_split(
    g: &Graph,
    g_f: &Graph,
    split: &Split,
    cfg: &TrainConfig,
) -> Result<(ModelParams, RunTrace)> {
    cfg.validate()?;
    let labels = g.labels().ok_or(Error::MissingLabels)?;
    let y_onehot = g.one_hot_labels()?;
    let inputs = graph_inputs(g, g_f)?;
    let mut model = ModelParams::init(
        &cfg.model,
        g.n_features(),
        g.n_classes(),
        derive_seed(cfg.seed, INIT_STREAM),
    )?;
    let mut adam = Adam::new(&model.store, cfg.adam());

    let mut records = Vec::new();
    let mut best: Option<(usize, f64, ModelParams)> = None;
    for epoch in 1..=cfg.epochs {
        let mut tape = Tape::new();
        let ids = model.store.bind(&mut tape);
        let out = model.forward(&mut tape, &ids, &inputs)?;
        let losses = record_losses(&mut tape, &out, &y_onehot, &split.train, cfg)?;
        tape.backward(losses.total)?;

        let y_hat = tape.value(out.y_hat());
        let predicted = y_hat.argmax_rows();
        let acc = |nodes: &[usize]| evaluate_predictions(&predicted, labels, nodes, g.n_classes()).0;
        let scalar = |id: Option<_>| id.map_or(0.0, |id| tape.value(id).item());
        let attn = match out.dual() {
            Some(s) => attention_norm_trace(tape.value(s.alpha_t), tape.value(s.alpha_f), tape.value(s.alpha_c)),
            None => [f64::NAN; 3],
        };
        let record = EpochRecord {
            epoch,
            loss_total: tape.value(losses.total).item(),
            loss_cl: tape.value(losses.cl).item(),
            loss_c: scalar(losses.c),
            loss_d: scalar(losses.d),
            train_acc: acc(&split.train),
            val_acc: acc(&split.validation),
            test_acc: acc(&split.test),
            attn,
        };
        let improved = split.validation.is_empty()
            || best.as_ref().is_none_or(|(_, v, _)| record.val_acc > *v);
        if improved {
            best = Some((epoch, record.val_acc, model.clone()));
        }
        records.push(record);

        let best_epoch = best.as_ref().map_or(epoch, |b| b.0);
        if epoch - best_epoch >= cfg.patience {
            break;
        }
        if epoch < cfg.epochs {
            let grads: Vec<Matrix> = ids.iter().map(|&id| tape.grad(id).clone()).collect();
            adam.step(&mut model.store, &grads);
        }
    }

    let (best_epoch, _, best_model) = best.expect("at least one epoch ran");
    let y_hat = best_model.predict_proba(&inputs)?;
    let (test_acc, test_macro_f1) = evaluate(&y_hat, labels, &split.test);
    let metrics = FinalMetrics {
        best_epoch,
        train_acc: evaluate(&y_hat, labels, &split.train).0,
        val_acc: evaluate(&y_hat, labels, &split.validation).0,
        test_acc,
        test_macro_f1,
    };
    Ok((best_model, RunTrace { records, metrics }))
}
