//! The dual-space model (topology encoder, feature encoder, shared common
//! encoder, feature-level attention fusion, softmax classifier) and the two
//! single-view GCN baselines.

mod baseline;
mod dual;
mod params;

use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use baseline::{gcn_baseline_forward, GcnSlots};
pub use dual::{
    attention_fuse, common_encoder, common_input, encoder_forward, fuse, input_mlp, predict,
    residual_gcn_layer, DualSpaceSlots, ForwardState,
};
pub use params::{linear_forward, mlp_forward, LinearSlot, MlpSlots, Param, ParamKind, ParamStore};

use crate::error::{Error, Result};
use crate::graph::SparseMatrix;
use crate::tensor::{Matrix, Tape, TensorId};
use params::ParamBuilder;

/// Output activation of the attention heads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionVariant {
    /// Independent per-element sigmoid for each channel.
    #[default]
    Sigmoid,
    /// Per-element softmax across the three channels.
    ChannelSoftmax,
}

/// Form of the residual encoder layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualMode {
    /// `alpha * ReLU(P h W) + (1 - alpha) * h0`.
    #[default]
    Initial,
    /// `alpha * h + (1 - alpha) * h0`, no propagation (ablation only).
    Literal,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    DualSpace,
    /// Two-layer GCN on the topology graph.
    Gcn,
    /// Two-layer GCN on the kNN feature graph.
    KnnGcn,
}

macro_rules! kebab_from_str {
    ($ty:ty { $($name:literal => $variant:expr),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(Error::InvalidConfig(format!(
                        concat!("unknown ", stringify!($ty), " `{}` (expected one of: ", $($name, " "),+, ")"),
                        other
                    ))),
                }
            }
        }

        impl $ty {
            pub fn as_str(&self) -> &'static str {
                match self {
                    $(x if *x == $variant => $name,)+
                    _ => unreachable!(),
                }
            }
        }
    };
}

kebab_from_str!(AttentionVariant { "sigmoid" => AttentionVariant::Sigmoid, "softmax" => AttentionVariant::ChannelSoftmax });
kebab_from_str!(ResidualMode { "initial" => ResidualMode::Initial, "literal" => ResidualMode::Literal });
kebab_from_str!(ModelKind { "dual" => ModelKind::DualSpace, "gcn" => ModelKind::Gcn, "knn-gcn" => ModelKind::KnnGcn });

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Embedding width `h` shared by every encoder.
    pub hidden: usize,
    /// Hidden width of the input MLP.
    pub mlp_hidden: usize,
    /// Residual mixing weight.
    pub alpha: f64,
    /// Weight of `H*` in the common-encoder input.
    pub zeta: f64,
    pub attention: AttentionVariant,
    pub residual: ResidualMode,
    /// Number of affine layers merging `Z_CT || Z_CF` into `Z_C`.
    pub combiner_depth: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::DualSpace,
            hidden: 64,
            mlp_hidden: 64,
            alpha: 0.8,
            zeta: 0.85,
            attention: AttentionVariant::Sigmoid,
            residual: ResidualMode::Initial,
            combiner_depth: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.hidden == 0 || self.mlp_hidden == 0 {
            return bad("hidden widths must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha = {} is outside [0, 1]", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.zeta) {
            return bad(format!("zeta = {} is outside [0, 1]", self.zeta));
        }
        if self.combiner_depth == 0 {
            return bad("combiner_depth must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    DualSpace(DualSpaceSlots),
    Gcn(GcnSlots),
}

/// Everything trainable, plus the layout mapping tensors to their roles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub n_features: usize,
    pub n_classes: usize,
    pub layout: Layout,
    pub store: ParamStore,
}

/// Constant inputs of a forward pass.
#[derive(Clone, Debug)]
pub struct GraphInputs {
    /// Normalized topology adjacency.
    pub topology: Arc<SparseMatrix>,
    /// Normalized kNN feature-graph adjacency.
    pub feature: Arc<SparseMatrix>,
    pub x: Matrix,
}

#[derive(Clone, Copy, Debug)]
pub enum ModelOutput {
    DualSpace(ForwardState),
    Baseline { y_hat: TensorId },
}

impl ModelOutput {
    pub fn y_hat(&self) -> TensorId {
        match self {
            ModelOutput::DualSpace(s) => s.y_hat,
            ModelOutput::Baseline { y_hat } => *y_hat,
        }
    }

    pub fn dual(&self) -> Option<&ForwardState> {
        match self {
            ModelOutput::DualSpace(s) => Some(s),
            ModelOutput::Baseline { .. } => None,
        }
    }
}

impl ModelParams {
    /// Fresh Glorot-uniform initialization, deterministic in `seed`.
    pub fn init(cfg: &ModelConfig, n_features: usize, n_classes: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = ParamBuilder::new(&mut rng);
        let h = cfg.hidden;
        let layout = match cfg.kind {
            ModelKind::DualSpace => {
                let input_mlp = b.mlp("input_mlp", &[n_features, cfg.mlp_hidden, h]);
                let topology_encoder = [b.weight("t_enc.0", h, h), b.weight("t_enc.1", h, h)];
                let feature_encoder = [b.weight("f_enc.0", h, h), b.weight("f_enc.1", h, h)];
                let common_encoder = [b.weight("c_enc.0", h, h), b.weight("c_enc.1", h, h)];
                let hstar_mlp = b.mlp("hstar_mlp", &[h, h, h]);
                let mut widths = vec![2 * h];
                widths.extend(std::iter::repeat_n(h, cfg.combiner_depth));
                let combiner = b.mlp("combiner", &widths);
                let attention_topology = b.mlp("attn_t", &[h, h, h]);
                let attention_feature = b.mlp("attn_f", &[h, h, h]);
                let attention_common = b.mlp("attn_c", &[h, h, h]);
                let output = b.linear("output", 2 * h, n_classes);
                Layout::DualSpace(DualSpaceSlots {
                    input_mlp,
                    topology_encoder,
                    feature_encoder,
                    common_encoder,
                    hstar_mlp,
                    combiner,
                    attention_topology,
                    attention_feature,
                    attention_common,
                    output,
                })
            }
            ModelKind::Gcn | ModelKind::KnnGcn => Layout::Gcn(GcnSlots {
                layers: [b.linear("gcn.0", n_features, h), b.linear("gcn.1", h, n_classes)],
            }),
        };
        Ok(Self {
            config: cfg.clone(),
            n_features,
            n_classes,
            layout,
            store: b.finish(),
        })
    }

    /// Records a forward pass on `tape`; `ids` must come from
    /// [`ParamStore::bind`] on this model's store.
    pub fn forward(&self, tape: &mut Tape, ids: &[TensorId], inputs: &GraphInputs) -> Result<ModelOutput> {
        if inputs.x.cols() != self.n_features {
            return Err(Error::ShapeMismatch {
                op: "forward",
                left: inputs.x.shape(),
                right: (inputs.x.rows(), self.n_features),
            });
        }
        let x = tape.leaf(inputs.x.clone());
        match &self.layout {
            Layout::DualSpace(slots) => dual::dual_forward(
                tape,
                ids,
                slots,
                &inputs.topology,
                &inputs.feature,
                x,
                &self.config,
            )
            .map(ModelOutput::DualSpace),
            Layout::Gcn(slots) => {
                let p = match self.config.kind {
                    ModelKind::KnnGcn => &inputs.feature,
                    _ => &inputs.topology,
                };
                let y_hat = gcn_baseline_forward(tape, ids, slots, p, x)?;
                Ok(ModelOutput::Baseline { y_hat })
            }
        }
    }

    /// Class probabilities without keeping a tape around.
    pub fn predict_proba(&self, inputs: &GraphInputs) -> Result<Matrix> {
        let mut tape = Tape::new();
        let ids = self.store.bind(&mut tape);
        let out = self.forward(&mut tape, &ids, inputs)?;
        Ok(tape.value(out.y_hat()).clone())
    }
}

#[cfg(test)]
mod tests;
