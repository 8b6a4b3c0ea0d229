use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::params::{linear_forward, mlp_forward, LinearSlot, MlpSlots};
use super::{AttentionVariant, ModelConfig, ResidualMode};
use crate::error::Result;
use crate::graph::SparseMatrix;
use crate::tensor::{Tape, TensorId};

/// Layout of the dual-space model's parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DualSpaceSlots {
    /// `X -> H0`.
    pub input_mlp: MlpSlots,
    pub topology_encoder: [usize; 2],
    pub feature_encoder: [usize; 2],
    /// One weight pair used by both common passes.
    pub common_encoder: [usize; 2],
    /// `H0 -> H*`.
    pub hstar_mlp: MlpSlots,
    /// `(Z_CT || Z_CF) -> Z_C`.
    pub combiner: MlpSlots,
    pub attention_topology: MlpSlots,
    pub attention_feature: MlpSlots,
    pub attention_common: MlpSlots,
    pub output: LinearSlot,
}

/// Every intermediate of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardState {
    pub h0: TensorId,
    pub z_t: TensorId,
    pub z_f: TensorId,
    pub z_ct: TensorId,
    pub z_cf: TensorId,
    pub z_c: TensorId,
    pub alpha_t: TensorId,
    pub alpha_f: TensorId,
    pub alpha_c: TensorId,
    pub z_tilde_t: TensorId,
    pub z_tilde_f: TensorId,
    pub z_hat: TensorId,
    pub y_hat: TensorId,
}

/// `H0 = f_MLP(X)`.
pub fn input_mlp(tape: &mut Tape, ids: &[TensorId], slots: &MlpSlots, x: TensorId) -> Result<TensorId> {
    mlp_forward(tape, ids, slots, x)
}

/// One propagation step with an initial residual:
/// `alpha * ReLU(P h W) + (1 - alpha) * h0`.
///
/// [`ResidualMode::Literal`] drops the propagation and returns
/// `alpha * h + (1 - alpha) * h0`.
pub fn residual_gcn_layer(
    tape: &mut Tape,
    p: &Arc<SparseMatrix>,
    h: TensorId,
    h0: TensorId,
    w: TensorId,
    alpha: f64,
    mode: ResidualMode,
) -> Result<TensorId> {
    let mixed = match mode {
        ResidualMode::Initial => {
            let hw = tape.matmul(h, w)?;
            let phw = tape.spmm(p, hw)?;
            tape.relu(phw)
        }
        ResidualMode::Literal => h,
    };
    tape.add_scaled(mixed, h0, alpha, 1.0 - alpha)
}

/// Two stacked residual layers, both mixing back to `h0`.
pub fn encoder_forward(
    tape: &mut Tape,
    p: &Arc<SparseMatrix>,
    h0: TensorId,
    weights: [TensorId; 2],
    alpha: f64,
    mode: ResidualMode,
) -> Result<TensorId> {
    let h1 = residual_gcn_layer(tape, p, h0, h0, weights[0], alpha, mode)?;
    residual_gcn_layer(tape, p, h1, h0, weights[1], alpha, mode)
}

/// `zeta * H* + (1 - zeta) * Z`.
pub fn common_input(tape: &mut Tape, h_star: TensorId, z: TensorId, zeta: f64) -> Result<TensorId> {
    tape.add_scaled(h_star, z, zeta, 1.0 - zeta)
}

/// Runs the shared encoder on both views and merges the results.
/// Returns `(Z_CT, Z_CF, Z_C)`.
#[allow(clippy::too_many_arguments)]
pub fn common_encoder(
    tape: &mut Tape,
    ids: &[TensorId],
    p_t: &Arc<SparseMatrix>,
    p_f: &Arc<SparseMatrix>,
    h_star: TensorId,
    z_t: TensorId,
    z_f: TensorId,
    shared: [usize; 2],
    combiner: &MlpSlots,
    cfg: &ModelConfig,
) -> Result<(TensorId, TensorId, TensorId)> {
    let weights = [ids[shared[0]], ids[shared[1]]];
    let in_t = common_input(tape, h_star, z_t, cfg.zeta)?;
    let z_ct = encoder_forward(tape, p_t, in_t, weights, cfg.alpha, cfg.residual)?;
    let in_f = common_input(tape, h_star, z_f, cfg.zeta)?;
    let z_cf = encoder_forward(tape, p_f, in_f, weights, cfg.alpha, cfg.residual)?;
    let both = tape.concat_cols(z_ct, z_cf)?;
    let z_c = mlp_forward(tape, ids, combiner, both)?;
    Ok((z_ct, z_cf, z_c))
}

/// Attention weights per view and the fused embeddings
/// `Z~_T = a_T * Z_T + a_C * Z_C`, `Z~_F = a_F * Z_F + a_C * Z_C`.
/// Returns `(Z~_T, Z~_F, a_T, a_F, a_C)`.
#[allow(clippy::too_many_arguments)]
pub fn attention_fuse(
    tape: &mut Tape,
    ids: &[TensorId],
    z_t: TensorId,
    z_f: TensorId,
    z_c: TensorId,
    heads: [&MlpSlots; 3],
    variant: AttentionVariant,
) -> Result<(TensorId, TensorId, TensorId, TensorId, TensorId)> {
    let scores = [
        mlp_forward(tape, ids, heads[0], z_t)?,
        mlp_forward(tape, ids, heads[1], z_f)?,
        mlp_forward(tape, ids, heads[2], z_c)?,
    ];
    let [a_t, a_f, a_c] = match variant {
        AttentionVariant::Sigmoid => scores.map(|s| tape.sigmoid(s)),
        AttentionVariant::ChannelSoftmax => [
            tape.channel_softmax(&scores, 0)?,
            tape.channel_softmax(&scores, 1)?,
            tape.channel_softmax(&scores, 2)?,
        ],
    };
    fuse(tape, [z_t, z_f, z_c], [a_t, a_f, a_c])
}

/// Fusion step of [`attention_fuse`] with the weights already computed.
pub fn fuse(
    tape: &mut Tape,
    [z_t, z_f, z_c]: [TensorId; 3],
    [a_t, a_f, a_c]: [TensorId; 3],
) -> Result<(TensorId, TensorId, TensorId, TensorId, TensorId)> {
    let common = tape.hadamard(a_c, z_c)?;
    let topo = tape.hadamard(a_t, z_t)?;
    let feat = tape.hadamard(a_f, z_f)?;
    let zt = tape.add(topo, common)?;
    let zf = tape.add(feat, common)?;
    Ok((zt, zf, a_t, a_f, a_c))
}

/// `softmax((Z~_T || Z~_F) W + b)`; returns `(Z^, Y^)`.
pub fn predict(
    tape: &mut Tape,
    ids: &[TensorId],
    z_tilde_t: TensorId,
    z_tilde_f: TensorId,
    output: &LinearSlot,
) -> Result<(TensorId, TensorId)> {
    let z_hat = tape.concat_cols(z_tilde_t, z_tilde_f)?;
    let logits = linear_forward(tape, ids, output, z_hat)?;
    Ok((z_hat, tape.softmax_rows(logits)))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn dual_forward(
    tape: &mut Tape,
    ids: &[TensorId],
    slots: &DualSpaceSlots,
    p_t: &Arc<SparseMatrix>,
    p_f: &Arc<SparseMatrix>,
    x: TensorId,
    cfg: &ModelConfig,
) -> Result<ForwardState> {
    let pick = |pair: [usize; 2]| [ids[pair[0]], ids[pair[1]]];
    let h0 = input_mlp(tape, ids, &slots.input_mlp, x)?;
    let z_t = encoder_forward(tape, p_t, h0, pick(slots.topology_encoder), cfg.alpha, cfg.residual)?;
    let z_f = encoder_forward(tape, p_f, h0, pick(slots.feature_encoder), cfg.alpha, cfg.residual)?;
    let h_star = mlp_forward(tape, ids, &slots.hstar_mlp, h0)?;
    let (z_ct, z_cf, z_c) = common_encoder(
        tape,
        ids,
        p_t,
        p_f,
        h_star,
        z_t,
        z_f,
        slots.common_encoder,
        &slots.combiner,
        cfg,
    )?;
    let heads = [
        &slots.attention_topology,
        &slots.attention_feature,
        &slots.attention_common,
    ];
    let (z_tilde_t, z_tilde_f, alpha_t, alpha_f, alpha_c) =
        attention_fuse(tape, ids, z_t, z_f, z_c, heads, cfg.attention)?;
    let (z_hat, y_hat) = predict(tape, ids, z_tilde_t, z_tilde_f, &slots.output)?;
    Ok(ForwardState {
        h0,
        z_t,
        z_f,
        z_ct,
        z_cf,
        z_c,
        alpha_t,
        alpha_f,
        alpha_c,
        z_tilde_t,
        z_tilde_f,
        z_hat,
        y_hat,
    })
}
