//! Heterophilous edge injection, the heterophily sweep, and synthetic
//! stochastic-block-model graphs.

mod synth;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use synth::{generate_synthetic, SynthSpec};

use crate::error::{Error, Result};
use crate::graph::{cross_label_edges, heterophily_ratio, Graph};
use crate::trainer::{derive_seed, train, TrainConfig};

/// Slack when comparing heterophily levels computed by different routes.
const LEVEL_TOLERANCE: f64 = 1e-9;

/// Upper end of every sweep.
pub const MAX_HETEROPHILY: f64 = 0.95;
/// Number of levels in a sweep.
pub const SWEEP_LEVELS: usize = 10;

/// Smallest number `K` of new cross-label edges with
/// `(E_het + K) / (|E| + K) >= target`, i.e.
/// `K = ceil((target |E| - E_het) / (1 - target))`.
pub fn required_edges(g: &Graph, target: f64) -> Result<usize> {
    if target.is_nan() || target >= 1.0 {
        return Err(Error::InvalidTarget(target));
    }
    let current = heterophily_ratio(g)?;
    if target < current - LEVEL_TOLERANCE {
        return Err(Error::TargetBelowCurrent { target, current });
    }
    let edges = g.n_edges() as f64;
    let het = cross_label_edges(g)? as f64;
    let raw = (target * edges - het) / (1.0 - target);
    if raw <= 0.0 {
        return Ok(0);
    }
    // absorb rounding in `raw` so exact solutions are not bumped by one
    let mut k = (raw - LEVEL_TOLERANCE * raw.max(1.0)).ceil().max(0.0) as usize;
    while (het + k as f64) / (edges + k as f64) < target - LEVEL_TOLERANCE {
        k += 1;
    }
    Ok(k)
}

/// Number of unordered cross-label node pairs not already joined by an edge.
pub fn available_cross_pairs(g: &Graph) -> Result<usize> {
    let sizes = g.class_sizes()?;
    let n = g.n_nodes();
    let total_pairs: usize = sizes.iter().map(|&s| s * (n - s)).sum::<usize>() / 2;
    Ok(total_pairs - cross_label_edges(g)?)
}

/// Adds exactly `k` new cross-label edges.
///
/// Each edge: a source `i` uniform over nodes, a target class drawn with
/// probability proportional to class size among the classes other than
/// `y_i`, then a target node uniform within that class. Pairs that already
/// exist are re-drawn; sources with no remaining cross-label partner are
/// skipped over. The input graph is left untouched.
pub fn inject_heterophilous_edges(g: &Graph, k: usize, seed: u64) -> Result<Graph> {
    let labels = g.labels().ok_or(Error::MissingLabels)?.to_vec();
    let sizes = g.class_sizes()?;
    if k == 0 {
        return Ok(g.clone());
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::NotEnoughPairs {
            requested: k,
            available: 0,
        });
    }
    let available = available_cross_pairs(g)?;
    if k > available {
        return Err(Error::NotEnoughPairs {
            requested: k,
            available,
        });
    }

    let n = g.n_nodes();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); g.n_classes()];
    for (v, &y) in labels.iter().enumerate() {
        members[y].push(v);
    }
    // remaining cross-label partners per node
    let mut free: Vec<usize> = labels.iter().map(|&y| n - sizes[y]).collect();
    for (a, b) in g.edges() {
        if labels[a] != labels[b] {
            free[a] -= 1;
            free[b] -= 1;
        }
    }
    let target_dists: Vec<WeightedIndex<usize>> = (0..g.n_classes())
        .map(|c| {
            let w: Vec<usize> = sizes
                .iter()
                .enumerate()
                .map(|(j, &s)| if j == c { 0 } else { s })
                .collect();
            WeightedIndex::new(w)
        })
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidGraph(format!("class weights: {e}")))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = g.clone();
    let mut added = 0;
    while added < k {
        let i = rng.random_range(0..n);
        if free[i] == 0 {
            continue;
        }
        let y_j = target_dists[labels[i]].sample(&mut rng);
        let j = members[y_j][rng.random_range(0..members[y_j].len())];
        if out.insert_edge(i, j) {
            free[i] -= 1;
            free[j] -= 1;
            added += 1;
        }
    }
    Ok(out)
}

/// Target heterophily levels and the injection seed for each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub levels: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl SweepPlan {
    /// Ten levels evenly spaced from the graph's own heterophily to 0.95,
    /// both ends included. A graph already at 0.95 gets a single level;
    /// above that is an error.
    pub fn linear(g: &Graph, seed: u64) -> Result<Self> {
        let h_init = heterophily_ratio(g)?;
        Self::from_start(h_init, seed)
    }

    pub fn from_start(h_init: f64, seed: u64) -> Result<Self> {
        if h_init > MAX_HETEROPHILY + LEVEL_TOLERANCE {
            return Err(Error::InvalidConfig(format!(
                "graph heterophily {h_init} already exceeds {MAX_HETEROPHILY}"
            )));
        }
        let levels = if h_init >= MAX_HETEROPHILY {
            vec![h_init]
        } else {
            let step = (MAX_HETEROPHILY - h_init) / (SWEEP_LEVELS - 1) as f64;
            (0..SWEEP_LEVELS)
                .map(|i| {
                    if i == SWEEP_LEVELS - 1 {
                        MAX_HETEROPHILY
                    } else {
                        h_init + step * i as f64
                    }
                })
                .collect()
        };
        let seeds = (0..levels.len() as u64).map(|i| derive_seed(seed, 100 + i)).collect();
        Ok(Self { levels, seeds })
    }
}

/// Builds the graph for every level of `plan`. Edges accumulate: each level
/// adds to the previous level's graph just enough cross-label edges to reach
/// its target, and the first level (the graph's own heterophily) adds none.
pub fn sweep_graphs(g: &Graph, plan: &SweepPlan) -> Result<Vec<(Graph, usize)>> {
    if plan.levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig("sweep levels must be strictly increasing".into()));
    }
    let mut current = g.clone();
    let mut out = Vec::with_capacity(plan.levels.len());
    for (&level, &seed) in plan.levels.iter().zip(&plan.seeds) {
        let k = required_edges(&current, level)?;
        current = inject_heterophilous_edges(&current, k, seed)?;
        let added = current.n_edges() - g.n_edges();
        out.push((current.clone(), added));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub level: f64,
    /// Edges added relative to the original graph.
    pub edges_added: usize,
    /// Heterophily of the altered graph, measured.
    pub heterophily: f64,
    pub test_acc: f64,
    pub test_macro_f1: f64,
}

/// Retrains from scratch on each level's graph (the feature graph is shared,
/// since features never change) and records test metrics.
pub fn heterophily_sweep(g: &Graph, g_f: &Graph, plan: &SweepPlan, cfg: &TrainConfig) -> Result<Vec<SweepRow>> {
    let graphs = sweep_graphs(g, plan)?;
    graphs
        .par_iter()
        .zip(plan.levels.par_iter())
        .map(|((graph, added), &level)| {
            let (_, trace) = train(graph, g_f, cfg)?;
            Ok(SweepRow {
                level,
                edges_added: *added,
                heterophily: heterophily_ratio(graph)?,
                test_acc: trace.metrics.test_acc,
                test_macro_f1: trace.metrics.test_macro_f1,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::homophily_ratio;
    use crate::tensor::Matrix;

    /// 100 edges, 20 of them cross-label.
    fn fixture() -> Graph {
        let n = 40;
        let labels: Vec<usize> = (0..n).map(|i| usize::from(i >= 20)).collect();
        let mut edges = Vec::new();
        'outer: for a in 0..20 {
            for b in a + 1..20 {
                if edges.len() == 80 {
                    break 'outer;
                }
                edges.push((a, b));
            }
        }
        for i in 0..20 {
            edges.push((i, 20 + i));
        }
        Graph::new(n, edges, Some(labels), Matrix::zeros(n, 1)).unwrap()
    }

    #[test]
    fn required_edges_closed_form() {
        let g = fixture();
        assert_eq!((g.n_edges(), cross_label_edges(&g).unwrap()), (100, 20));
        assert_eq!(required_edges(&g, 0.5).unwrap(), 60);
        assert_eq!(required_edges(&g, 0.2).unwrap(), 0);
        assert!(matches!(
            required_edges(&g, 0.1),
            Err(Error::TargetBelowCurrent { .. })
        ));
        assert!(matches!(required_edges(&g, 1.0), Err(Error::InvalidTarget(_))));
    }

    #[test]
    fn required_edges_is_minimal() {
        let g = fixture();
        for t in [0.25, 0.3, 0.333, 0.41, 0.5, 0.77, 0.95] {
            let k = required_edges(&g, t).unwrap() as f64;
            assert!((20.0 + k) / (100.0 + k) >= t - 1e-12);
            if k > 0.0 {
                assert!((19.0 + k) / (99.0 + k) < t);
            }
        }
    }

    #[test]
    fn injection_adds_only_cross_label_edges() {
        let g = fixture();
        let out = inject_heterophilous_edges(&g, 60, 9).unwrap();
        assert_eq!(out.n_edges(), 160);
        assert!(g.edges().all(|(a, b)| out.has_edge(a, b)));
        let labels = g.labels().unwrap();
        for (a, b) in out.edges().filter(|&(a, b)| !g.has_edge(a, b)) {
            assert_ne!(labels[a], labels[b]);
        }
        assert_eq!(homophily_ratio(&out).unwrap(), 0.5);
        assert_eq!(out.labels(), g.labels());
        assert_eq!(out.features(), g.features());
    }

    #[test]
    fn zero_injection_is_identity() {
        let g = fixture();
        assert_eq!(inject_heterophilous_edges(&g, 0, 1).unwrap(), g);
    }

    #[test]
    fn too_many_edges_is_an_error() {
        let g = fixture();
        let available = available_cross_pairs(&g).unwrap();
        assert_eq!(available, 20 * 20 - 20);
        assert!(matches!(
            inject_heterophilous_edges(&g, available + 1, 0),
            Err(Error::NotEnoughPairs { .. })
        ));
        let full = inject_heterophilous_edges(&g, available, 0).unwrap();
        assert_eq!(cross_label_edges(&full).unwrap(), 400);
    }

    #[test]
    fn plan_is_linear_and_inclusive() {
        let plan = SweepPlan::from_start(0.2, 0).unwrap();
        assert_eq!(plan.levels.len(), 10);
        assert_eq!(plan.levels[0], 0.2);
        assert_eq!(plan.levels[9], 0.95);
        assert!(plan.levels.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(SweepPlan::from_start(0.95, 0).unwrap().levels, vec![0.95]);
        assert!(SweepPlan::from_start(0.97, 0).is_err());
    }

    #[test]
    fn sweep_graphs_hit_their_levels() {
        let g = generate_synthetic(&SynthSpec {
            seed: 2,
            ..SynthSpec::balanced(2, 60, 0.02, 0.005)
        })
        .unwrap();
        let plan = SweepPlan::linear(&g, 4).unwrap();
        let graphs = sweep_graphs(&g, &plan).unwrap();
        assert_eq!(graphs[0].0, g);
        assert_eq!(graphs[0].1, 0);
        for ((graph, _), &level) in graphs.iter().zip(&plan.levels) {
            let achieved = heterophily_ratio(graph).unwrap();
            assert!((achieved - level).abs() <= 0.01, "{achieved} vs {level}");
        }
    }
}
