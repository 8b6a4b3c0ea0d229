use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::params::{linear_forward, LinearSlot};
use crate::error::Result;
use crate::graph::SparseMatrix;
use crate::tensor::{Tape, TensorId};

/// Two GCN layers: `softmax(P ReLU(P X W0 + b0) W1 + b1)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GcnSlots {
    pub layers: [LinearSlot; 2],
}

/// Plain two-layer GCN over `p`. With the topology adjacency this is the GCN
/// baseline; with the kNN feature adjacency it is kNN-GCN.
pub fn gcn_baseline_forward(
    tape: &mut Tape,
    ids: &[TensorId],
    slots: &GcnSlots,
    p: &Arc<SparseMatrix>,
    x: TensorId,
) -> Result<TensorId> {
    let px = tape.spmm(p, x)?;
    let h = linear_forward(tape, ids, &slots.layers[0], px)?;
    let h = tape.relu(h);
    let ph = tape.spmm(p, h)?;
    let logits = linear_forward(tape, ids, &slots.layers[1], ph)?;
    Ok(tape.softmax_rows(logits))
}
