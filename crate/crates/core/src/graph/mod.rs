//! Graphs, sparse operators, the edge homophily ratio and kNN feature graphs.

mod knn;
mod sparse;

use std::collections::BTreeSet;

pub use knn::{cosine_similarity_matrix, knn_feature_graph};
pub use sparse::SparseMatrix;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Undirected edge stored as `(low, high)`.
pub type Edge = (usize, usize);

/// Undirected, unweighted graph with optional node labels and a dense
/// feature matrix.
///
/// Edges are kept canonical (`i < j`) in a sorted set, so self-loops and
/// duplicates cannot be represented.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n_nodes: usize,
    edges: BTreeSet<Edge>,
    labels: Option<Vec<usize>>,
    n_classes: usize,
    features: Matrix,
}

impl Graph {
    /// Validating constructor. Edges may be given in either orientation;
    /// self-loops and repeated pairs are rejected.
    pub fn new(
        n_nodes: usize,
        edges: impl IntoIterator<Item = Edge>,
        labels: Option<Vec<usize>>,
        features: Matrix,
    ) -> Result<Self> {
        let n_classes = labels
            .as_ref()
            .map_or(0, |l| l.iter().max().map_or(0, |&m| m + 1));
        Self::with_classes(n_nodes, edges, labels, n_classes, features)
    }

    /// Like [`Graph::new`] but with an explicit class count, which may exceed
    /// the largest label present.
    pub fn with_classes(
        n_nodes: usize,
        edges: impl IntoIterator<Item = Edge>,
        labels: Option<Vec<usize>>,
        n_classes: usize,
        features: Matrix,
    ) -> Result<Self> {
        if features.rows() != n_nodes {
            return Err(Error::InvalidGraph(format!(
                "feature matrix has {} rows for {} nodes",
                features.rows(),
                n_nodes
            )));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n_nodes || b >= n_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) references a node outside 0..{n_nodes}"
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop on node {a}")));
            }
            if !set.insert(canonical(a, b)) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({a}, {b})")));
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != n_nodes {
                return Err(Error::InvalidGraph(format!(
                    "{} labels for {} nodes",
                    labels.len(),
                    n_nodes
                )));
            }
            if let Some((node, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= n_classes) {
                return Err(Error::InvalidGraph(format!(
                    "node {node} has label {y}, outside 0..{n_classes}"
                )));
            }
        }
        Ok(Self {
            n_nodes,
            edges: set,
            labels,
            n_classes,
            features,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Canonical edges in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&canonical(a, b))
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    /// Adds an undirected edge; returns `false` if it was already present.
    /// Panics on self-loops or out-of-range endpoints.
    pub(crate) fn insert_edge(&mut self, a: usize, b: usize) -> bool {
        assert!(a != b && a < self.n_nodes && b < self.n_nodes);
        self.edges.insert(canonical(a, b))
    }

    /// Copy of this graph carrying a different edge set.
    pub fn with_edges(&self, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        Self::with_classes(
            self.n_nodes,
            edges,
            self.labels.clone(),
            self.n_classes,
            self.features.clone(),
        )
    }

    /// Copy of this graph without labels.
    pub fn without_labels(&self) -> Self {
        Self {
            labels: None,
            n_classes: 0,
            ..self.clone()
        }
    }

    /// Sizes of each class, indexed by class id.
    pub fn class_sizes(&self) -> Result<Vec<usize>> {
        let labels = self.labels.as_ref().ok_or(Error::MissingLabels)?;
        let mut sizes = vec![0; self.n_classes];
        for &y in labels {
            sizes[y] += 1;
        }
        Ok(sizes)
    }

    /// One-hot `N x C` label matrix.
    pub fn one_hot_labels(&self) -> Result<Matrix> {
        let labels = self.labels.as_ref().ok_or(Error::MissingLabels)?;
        let mut m = Matrix::zeros(self.n_nodes, self.n_classes);
        for (i, &y) in labels.iter().enumerate() {
            m[(i, y)] = 1.0;
        }
        Ok(m)
    }
}

fn canonical(a: usize, b: usize) -> Edge {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Degree of every node, not counting self-loops.
pub fn degree_stats(g: &Graph) -> Vec<usize> {
    let mut deg = vec![0; g.n_nodes()];
    for (a, b) in g.edges() {
        deg[a] += 1;
        deg[b] += 1;
    }
    deg
}

/// Symmetrically normalized adjacency with self-loops,
/// `D^{-1/2} (A + I) D^{-1/2}`, where `D` counts the added self-loop.
pub fn normalized_adjacency(g: &Graph) -> SparseMatrix {
    let deg: Vec<f64> = degree_stats(g).into_iter().map(|d| (d + 1) as f64).collect();
    let n = g.n_nodes();
    let mut triplets = Vec::with_capacity(n + 2 * g.n_edges());
    triplets.extend(deg.iter().enumerate().map(|(i, d)| (i, i, 1.0 / d)));
    for (a, b) in g.edges() {
        let v = 1.0 / (deg[a] * deg[b]).sqrt();
        triplets.push((a, b, v));
        triplets.push((b, a, v));
    }
    SparseMatrix::from_triplets(n, n, triplets).expect("edge endpoints are validated by Graph")
}

/// Edge homophily ratio: the fraction of edges whose endpoints share a label.
pub fn homophily_ratio(g: &Graph) -> Result<f64> {
    let same = same_label_edges(g)?;
    Ok(same as f64 / g.n_edges() as f64)
}

/// `1 - homophily_ratio`.
pub fn heterophily_ratio(g: &Graph) -> Result<f64> {
    let same = same_label_edges(g)?;
    Ok((g.n_edges() - same) as f64 / g.n_edges() as f64)
}

/// Number of edges whose endpoints carry different labels.
pub fn cross_label_edges(g: &Graph) -> Result<usize> {
    Ok(g.n_edges() - count_same(g)?)
}

fn same_label_edges(g: &Graph) -> Result<usize> {
    let same = count_same(g)?;
    if g.n_edges() == 0 {
        return Err(Error::UndefinedHomophily);
    }
    Ok(same)
}

fn count_same(g: &Graph) -> Result<usize> {
    let labels = g.labels().ok_or(Error::MissingLabels)?;
    Ok(g.edges().filter(|&(a, b)| labels[a] == labels[b]).count())
}
