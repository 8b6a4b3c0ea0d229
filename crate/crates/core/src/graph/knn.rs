use std::cmp::Ordering;

use super::{Edge, Graph};
use crate::error::{Error, Result};
use crate::tensor::{dot, norm, Matrix};

/// Dense `N x N` cosine similarity of the rows of `x`.
pub fn cosine_similarity_matrix(x: &Matrix) -> Result<Matrix> {
    let norms: Vec<f64> = x.row_iter().map(norm).collect();
    if let Some(node) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::ZeroFeatureRow { node });
    }
    let n = x.rows();
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = dot(x.row(i), x.row(j)) / (norms[i] * norms[j]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(s)
}

/// Feature graph: every node selects its `k` most cosine-similar other nodes
/// (ties go to the lower index) and the selections are symmetrized by union.
/// The result carries `x` as features and no labels.
pub fn knn_feature_graph(x: &Matrix, k: usize) -> Result<Graph> {
    let n = x.rows();
    if k == 0 || k >= n {
        return Err(Error::InvalidK { k, n });
    }
    let sim = cosine_similarity_matrix(x)?;
    let mut edges: Vec<Edge> = Vec::with_capacity(n * k);
    let mut candidates: Vec<usize> = Vec::with_capacity(n - 1);
    for i in 0..n {
        candidates.clear();
        candidates.extend((0..n).filter(|&j| j != i));
        let row = sim.row(i);
        let by_rank = |&a: &usize, &b: &usize| {
            row[b]
                .partial_cmp(&row[a])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        };
        candidates.select_nth_unstable_by(k - 1, by_rank);
        edges.extend(candidates[..k].iter().map(|&j| (i.min(j), i.max(j))));
    }
    edges.sort_unstable();
    edges.dedup();
    Graph::new(n, edges, None, x.clone())
}
