use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Reduction;
use crate::trainer::TrainConfig;

/// A parsed config file: training settings plus optional paths.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub dataset: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

/// Every recognized key, in the order [`render_config`] writes them.
pub const CONFIG_KEYS: &[&str] = &[
    "dataset",
    "output",
    "model",
    "hidden",
    "mlp_hidden",
    "alpha",
    "zeta",
    "attention",
    "residual",
    "combiner_depth",
    "k",
    "lambda",
    "beta",
    "gamma",
    "lr",
    "weight_decay",
    "epochs",
    "patience",
    "seed",
    "labels_per_class",
    "val_per_class",
    "reduction",
    "normalized_closeness",
];

fn parse_reduction(s: &str) -> std::result::Result<Reduction, String> {
    match s {
        "sum" => Ok(Reduction::Sum),
        "mean" => Ok(Reduction::Mean),
        other => Err(format!("unknown reduction `{other}` (expected sum or mean)")),
    }
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            v.parse().map_err(|e| format!("bad value `{v}` for `{key}`: {e}"))
        }
        fn named<T: FromStr<Err = Error>>(v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|e: Error| e.to_string())
        }
        let t = &mut self.train;
        match key {
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "output" => self.output = Some(PathBuf::from(value)),
            "model" => t.model.kind = named(value)?,
            "hidden" => t.model.hidden = num(key, value)?,
            "mlp_hidden" => t.model.mlp_hidden = num(key, value)?,
            "alpha" => t.model.alpha = num(key, value)?,
            "zeta" => t.model.zeta = num(key, value)?,
            "attention" => t.model.attention = named(value)?,
            "residual" => t.model.residual = named(value)?,
            "combiner_depth" => t.model.combiner_depth = num(key, value)?,
            "k" => t.k = num(key, value)?,
            "lambda" => t.loss.lambda = num(key, value)?,
            "beta" => t.loss.beta = num(key, value)?,
            "gamma" => t.loss.gamma = num(key, value)?,
            "lr" => t.lr = num(key, value)?,
            "weight_decay" => t.weight_decay = num(key, value)?,
            "epochs" => t.epochs = num(key, value)?,
            "patience" => t.patience = num(key, value)?,
            "seed" => t.seed = num(key, value)?,
            "labels_per_class" => t.labels_per_class = num(key, value)?,
            "val_per_class" => t.val_per_class = num(key, value)?,
            "reduction" => t.reduction = parse_reduction(value)?,
            "normalized_closeness" => t.normalized_closeness = num(key, value)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }
}

/// Parses config text; missing keys keep their defaults.
pub fn parse_config(text: &str, path: &Path) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
        cfg.set(key.trim(), value.trim()).map_err(err)?;
    }
    cfg.train
        .validate()
        .map_err(|e| Error::Dataset {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

/// Writes every key, so the output parses back to the same config.
pub fn render_config(cfg: &RunConfig) -> String {
    let t = &cfg.train;
    let m = &t.model;
    let mut out = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    if let Some(d) = &cfg.dataset {
        put("dataset", d.display().to_string());
    }
    if let Some(o) = &cfg.output {
        put("output", o.display().to_string());
    }
    put("model", m.kind.as_str().into());
    put("hidden", m.hidden.to_string());
    put("mlp_hidden", m.mlp_hidden.to_string());
    put("alpha", format!("{:?}", m.alpha));
    put("zeta", format!("{:?}", m.zeta));
    put("attention", m.attention.as_str().into());
    put("residual", m.residual.as_str().into());
    put("combiner_depth", m.combiner_depth.to_string());
    put("k", t.k.to_string());
    put("lambda", format!("{:?}", t.loss.lambda));
    put("beta", format!("{:?}", t.loss.beta));
    put("gamma", format!("{:?}", t.loss.gamma));
    put("lr", format!("{:?}", t.lr));
    put("weight_decay", format!("{:?}", t.weight_decay));
    put("epochs", t.epochs.to_string());
    put("patience", t.patience.to_string());
    put("seed", t.seed.to_string());
    put("labels_per_class", t.labels_per_class.to_string());
    put("val_per_class", t.val_per_class.to_string());
    put(
        "reduction",
        match t.reduction {
            Reduction::Sum => "sum",
            Reduction::Mean => "mean",
        }
        .into(),
    );
    put("normalized_closeness", t.normalized_closeness.to_string());
    out
}
