use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op}: row {row} has zero norm")]
    ZeroRow { op: &'static str, row: usize },
    #[error("{op}: expected a scalar (1x1) node, got {shape:?}")]
    NotScalar {
        op: &'static str,
        shape: (usize, usize),
    },
    #[error("backward already ran on this tape")]
    BackwardTwice,
    #[error("cross-entropy: row {row} of predictions sums to {sum}, expected 1")]
    NotProbabilities { row: usize, sum: f64 },
    #[error("cross-entropy: empty node mask")]
    EmptyMask,
    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("undefined homophily: the graph has no edges")]
    UndefinedHomophily,
    #[error("graph has no labels")]
    MissingLabels,
    #[error("node {node} has an all-zero feature row; cosine similarity is undefined")]
    ZeroFeatureRow { node: usize },
    #[error("invalid k = {k} for a graph with {n} nodes (need 1 <= k < n)")]
    InvalidK { k: usize, n: usize },

    #[error("class {class} has {available} nodes, but the split needs {needed}")]
    ClassTooSmall {
        class: usize,
        available: usize,
        needed: usize,
    },
    #[error("target heterophily {target} is below the current heterophily {current}")]
    TargetBelowCurrent { target: f64, current: f64 },
    #[error("invalid target heterophily {0} (must be < 1)")]
    InvalidTarget(f64),
    #[error("cannot add {requested} cross-label edges: only {available} absent cross-label pairs remain")]
    NotEnoughPairs { requested: usize, available: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}: {msg}")]
    Dataset { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
