use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::Matrix;

/// Stochastic block model with Gaussian class-conditional features.
///
/// Class `c` has mean `separation * e_c` (so `dim >= C`) and isotropic noise
/// with standard deviation `noise`. Nodes are labelled in contiguous blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub class_sizes: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    pub dim: usize,
    pub separation: f64,
    pub noise: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// `n_classes` equal blocks of `per_class` nodes.
    pub fn balanced(n_classes: usize, per_class: usize, p_in: f64, p_out: f64) -> Self {
        Self {
            class_sizes: vec![per_class; n_classes],
            p_in,
            p_out,
            dim: 16,
            separation: 1.0,
            noise: 1.0,
            seed: 0,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.class_sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        for p in [self.p_in, self.p_out] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("edge probability {p} is outside [0, 1]"));
            }
        }
        if self.class_sizes.is_empty() || self.class_sizes.contains(&0) {
            return bad("every class needs at least one node".into());
        }
        if self.dim < self.class_sizes.len() {
            return bad(format!(
                "feature dimension {} is smaller than the class count {}",
                self.dim,
                self.class_sizes.len()
            ));
        }
        if self.noise.is_nan() || self.noise < 0.0 || !self.separation.is_finite() {
            return bad("noise must be non-negative and separation finite".into());
        }
        Ok(())
    }
}

/// Samples a graph from `spec`; deterministic in `spec.seed`.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Graph> {
    spec.validate()?;
    let n = spec.n_nodes();
    let labels: Vec<usize> = spec
        .class_sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let p = if labels[a] == labels[b] { spec.p_in } else { spec.p_out };
            if rng.random::<f64>() < p {
                edges.push((a, b));
            }
        }
    }

    let normal = Normal::new(0.0, spec.noise).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut x = Matrix::zeros(n, spec.dim);
    for (v, &y) in labels.iter().enumerate() {
        let row = x.row_mut(v);
        for value in row.iter_mut() {
            *value = normal.sample(&mut rng);
        }
        row[y] += spec.separation;
    }
    Graph::with_classes(n, edges, Some(labels), spec.class_sizes.len(), x)
}
