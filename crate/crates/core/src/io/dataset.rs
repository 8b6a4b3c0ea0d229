use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::Matrix;

pub const NODES_FILE: &str = "nodes.tsv";
pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.tsv";
pub const SPARSE_FEATURES_FILE: &str = "features.sparse.tsv";
pub const META_FILE: &str = "meta.tsv";

/// Label cell for an unlabelled node.
const NO_LABEL: &str = "-";

struct Table {
    path: PathBuf,
    /// `(line number, fields)` for every non-header, non-blank line.
    rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    fn read(path: PathBuf) -> Result<Self> {
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = text.lines().enumerate();
        if lines.next().is_none() {
            return Err(Error::Dataset {
                path,
                msg: "missing header line".into(),
            });
        }
        let rows = lines
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, l.split('\t').map(|f| f.trim().to_string()).collect()))
            .collect();
        Ok(Self { path, rows })
    }

    fn error(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            msg: msg.into(),
        }
    }

    fn expect_width(&self, line: usize, fields: &[String], width: usize) -> Result<()> {
        if fields.len() != width {
            return Err(self.error(line, format!("expected {width} fields, found {}", fields.len())));
        }
        Ok(())
    }

    fn parse<T: std::str::FromStr>(&self, line: usize, field: &str, what: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        field
            .parse()
            .map_err(|e| self.error(line, format!("bad {what} `{field}`: {e}")))
    }
}

struct Meta {
    n_nodes: usize,
    n_classes: usize,
    n_features: usize,
}

fn read_meta(dir: &Path) -> Result<Meta> {
    let table = Table::read(dir.join(META_FILE))?;
    let (mut n_nodes, mut n_classes, mut n_features) = (None, None, None);
    for (line, fields) in &table.rows {
        table.expect_width(*line, fields, 2)?;
        let slot = match fields[0].as_str() {
            "n_nodes" => &mut n_nodes,
            "n_classes" => &mut n_classes,
            "n_features" => &mut n_features,
            other => return Err(table.error(*line, format!("unknown meta key `{other}`"))),
        };
        *slot = Some(table.parse::<usize>(*line, &fields[1], "count")?);
    }
    let missing = |key: &str| Error::Dataset {
        path: table.path.clone(),
        msg: format!("missing key `{key}`"),
    };
    Ok(Meta {
        n_nodes: n_nodes.ok_or_else(|| missing("n_nodes"))?,
        n_classes: n_classes.ok_or_else(|| missing("n_classes"))?,
        n_features: n_features.ok_or_else(|| missing("n_features"))?,
    })
}

fn read_labels(dir: &Path, meta: &Meta) -> Result<Option<Vec<usize>>> {
    let table = Table::read(dir.join(NODES_FILE))?;
    let mut labels: Vec<Option<Option<usize>>> = vec![None; meta.n_nodes];
    for (line, fields) in &table.rows {
        table.expect_width(*line, fields, 2)?;
        let node: usize = table.parse(*line, &fields[0], "node id")?;
        if node >= meta.n_nodes {
            return Err(table.error(*line, format!("node id {node} >= n_nodes {}", meta.n_nodes)));
        }
        if labels[node].is_some() {
            return Err(table.error(*line, format!("node {node} listed twice")));
        }
        let label = if fields[1] == NO_LABEL {
            None
        } else {
            let y: usize = table.parse(*line, &fields[1], "label")?;
            if y >= meta.n_classes {
                return Err(table.error(*line, format!("label {y} >= n_classes {}", meta.n_classes)));
            }
            Some(y)
        };
        labels[node] = Some(label);
    }
    if let Some(gap) = labels.iter().position(Option::is_none) {
        return Err(Error::Dataset {
            path: table.path,
            msg: format!("node id {gap} is missing (ids must be 0..{} contiguous)", meta.n_nodes),
        });
    }
    let labels: Vec<Option<usize>> = labels.into_iter().flatten().collect();
    let labelled = labels.iter().filter(|l| l.is_some()).count();
    match labelled {
        0 => Ok(None),
        l if l == labels.len() => Ok(Some(labels.into_iter().flatten().collect())),
        _ => Err(Error::Dataset {
            path: table.path,
            msg: "either every node or no node must carry a label".into(),
        }),
    }
}

fn read_edges(dir: &Path, n_nodes: usize) -> Result<Vec<(usize, usize)>> {
    let table = Table::read(dir.join(EDGES_FILE))?;
    let mut seen = BTreeSet::new();
    let mut edges = Vec::new();
    for (line, fields) in &table.rows {
        table.expect_width(*line, fields, 2)?;
        let a: usize = table.parse(*line, &fields[0], "node id")?;
        let b: usize = table.parse(*line, &fields[1], "node id")?;
        if a >= n_nodes || b >= n_nodes {
            return Err(table.error(*line, format!("edge ({a}, {b}) references a node >= {n_nodes}")));
        }
        if a == b {
            return Err(table.error(*line, format!("self-loop on node {a}")));
        }
        if seen.insert((a.min(b), a.max(b))) {
            edges.push((a, b));
        } else {
            log::warn!("{}:{line}: duplicate edge ({a}, {b}) ignored", table.path.display());
        }
    }
    Ok(edges)
}

fn read_features(dir: &Path, meta: &Meta) -> Result<Matrix> {
    let dense = dir.join(FEATURES_FILE);
    let sparse = dir.join(SPARSE_FEATURES_FILE);
    let mut x = Matrix::zeros(meta.n_nodes, meta.n_features);
    if dense.exists() {
        let table = Table::read(dense)?;
        let mut filled = vec![false; meta.n_nodes];
        for (line, fields) in &table.rows {
            table.expect_width(*line, fields, meta.n_features + 1)?;
            let node: usize = table.parse(*line, &fields[0], "node id")?;
            if node >= meta.n_nodes || filled[node] {
                return Err(table.error(*line, format!("node id {node} out of range or repeated")));
            }
            filled[node] = true;
            for (j, f) in fields[1..].iter().enumerate() {
                x.row_mut(node)[j] = table.parse(*line, f, "feature value")?;
            }
        }
        if let Some(gap) = filled.iter().position(|&f| !f) {
            return Err(Error::Dataset {
                path: table.path,
                msg: format!("no feature row for node {gap}"),
            });
        }
    } else if sparse.exists() {
        let table = Table::read(sparse)?;
        for (line, fields) in &table.rows {
            table.expect_width(*line, fields, 3)?;
            let node: usize = table.parse(*line, &fields[0], "node id")?;
            let j: usize = table.parse(*line, &fields[1], "feature index")?;
            if node >= meta.n_nodes || j >= meta.n_features {
                return Err(table.error(*line, format!("entry ({node}, {j}) outside {}x{}", meta.n_nodes, meta.n_features)));
            }
            x.row_mut(node)[j] = table.parse(*line, &fields[2], "feature value")?;
        }
    } else {
        return Err(Error::Dataset {
            path: dir.to_path_buf(),
            msg: format!("neither {FEATURES_FILE} nor {SPARSE_FEATURES_FILE} exists"),
        });
    }
    Ok(x)
}

/// Reads a dataset directory.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Graph> {
    let dir = dir.as_ref();
    let meta = read_meta(dir)?;
    let labels = read_labels(dir, &meta)?;
    let edges = read_edges(dir, meta.n_nodes)?;
    let x = read_features(dir, &meta)?;
    let n_classes = if labels.is_some() { meta.n_classes } else { 0 };
    Graph::with_classes(meta.n_nodes, edges, labels, n_classes, x)
}

/// Writes `g` in canonical form: nodes by id, edges as sorted `(low, high)`
/// pairs, dense features with shortest round-trip float formatting.
pub fn save_dataset(g: &Graph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut meta = String::from("key\tvalue\n");
    let _ = writeln!(meta, "n_nodes\t{}", g.n_nodes());
    let _ = writeln!(meta, "n_classes\t{}", g.n_classes());
    let _ = writeln!(meta, "n_features\t{}", g.n_features());

    let mut nodes = String::from("node\tlabel\n");
    for v in 0..g.n_nodes() {
        match g.labels() {
            Some(l) => writeln!(nodes, "{v}\t{}", l[v]),
            None => writeln!(nodes, "{v}\t{NO_LABEL}"),
        }
        .expect("writing to a String cannot fail");
    }

    let mut edges = String::from("src\tdst\n");
    for (a, b) in g.edges() {
        let _ = writeln!(edges, "{a}\t{b}");
    }

    let mut features = String::from("node");
    for j in 0..g.n_features() {
        let _ = write!(features, "\tx{j}");
    }
    features.push('\n');
    for (v, row) in g.features().row_iter().enumerate() {
        let _ = write!(features, "{v}");
        for value in row {
            let _ = write!(features, "\t{value:?}");
        }
        features.push('\n');
    }

    let sparse = dir.join(SPARSE_FEATURES_FILE);
    if sparse.exists() {
        fs::remove_file(&sparse).map_err(|e| Error::io(&sparse, e))?;
    }
    for (name, body) in [
        (META_FILE, meta),
        (NODES_FILE, nodes),
        (EDGES_FILE, edges),
        (FEATURES_FILE, features),
    ] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
