use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Disjoint train / validation / test node sets, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified split: per class, `labels_per_class` training nodes, then
/// `val_per_class` validation nodes from the remainder; everything left is test.
pub fn make_split(g: &Graph, labels_per_class: usize, val_per_class: usize, seed: u64) -> Result<Split> {
    if labels_per_class == 0 {
        return Err(Error::InvalidConfig("labels_per_class must be at least 1".into()));
    }
    let labels = g.labels().ok_or(Error::MissingLabels)?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); g.n_classes()];
    for (node, &y) in labels.iter().enumerate() {
        by_class[y].push(node);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let needed = labels_per_class + val_per_class;
    let mut split = Split {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (class, mut nodes) in by_class.into_iter().enumerate() {
        if nodes.len() < needed {
            return Err(Error::ClassTooSmall {
                class,
                available: nodes.len(),
                needed,
            });
        }
        nodes.shuffle(&mut rng);
        split.train.extend_from_slice(&nodes[..labels_per_class]);
        split.validation.extend_from_slice(&nodes[labels_per_class..needed]);
        split.test.extend_from_slice(&nodes[needed..]);
    }
    split.train.sort_unstable();
    split.validation.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}
