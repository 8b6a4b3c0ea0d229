//! Command-line front end. [`run`] maps an argument vector to an exit code:
//! 0 on success, 1 on usage errors, 2 on data errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use dualgcn::graph::{heterophily_ratio, homophily_ratio, knn_feature_graph, Graph};
use dualgcn::io::{
    emit_sweep, emit_trace, load_config, load_dataset, read_json, save_dataset, write_json, RunConfig,
};
use dualgcn::lab::{generate_synthetic, heterophily_sweep, inject_heterophilous_edges, required_edges, SweepPlan, SynthSpec};
use dualgcn::model::ModelParams;
use dualgcn::tensor::GradCheckConfig;
use dualgcn::trainer::{
    derive_seed, evaluate, graph_inputs, make_split, objective_gradcheck, train, FinalMetrics, TrainConfig,
    SPLIT_STREAM,
};
use dualgcn::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

pub const METRICS_FILE: &str = "metrics.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const MODEL_FILE: &str = "model.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const GRADCHECK_FILE: &str = "gradcheck.json";

#[derive(Debug, Parser)]
#[command(name = "dualgcn", version, about = "Dual-space GCN for node classification under heterophily")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory; overrides `dataset` in the config.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model; writes metrics.json, trace.csv and model.json.
    Train(RunArgs),
    /// Evaluate a saved model on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Split seed; defaults to the seed the model was trained with.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the edge homophily ratio and heterophily of a dataset.
    Homophily {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Build the kNN feature graph of a dataset and save it as a dataset.
    KnnGraph {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 7)]
        k: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Add cross-label edges until the heterophily reaches a target.
    Inject {
        #[arg(long)]
        dataset: PathBuf,
        /// Target heterophily, 1 - homophily.
        #[arg(long)]
        target: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Retrain at ten heterophily levels up to 0.95; writes sweep.csv.
    Sweep(RunArgs),
    /// Generate a stochastic-block-model dataset.
    Synth(SynthArgs),
    /// Finite-difference check of the training objective on a small random graph.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 12)]
        nodes: usize,
        #[arg(long, default_value_t = 5)]
        features: usize,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Comma-separated class sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [200usize, 200])]
    class_sizes: Vec<usize>,
    #[arg(long, default_value_t = 0.05)]
    p_in: f64,
    #[arg(long, default_value_t = 0.005)]
    p_out: f64,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 2.0)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

/// What `train` stores for `eval`.
#[derive(Debug, Serialize, Deserialize)]
pub struct SavedModel {
    pub config: TrainConfig,
    pub params: ModelParams,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Train(args) => cmd_train(args),
        Command::Eval {
            model,
            dataset,
            seed,
            output,
        } => cmd_eval(&model, &dataset, seed, output.as_deref()),
        Command::Homophily { dataset } => cmd_homophily(&dataset),
        Command::KnnGraph { dataset, k, output } => cmd_knn_graph(&dataset, k, &output),
        Command::Inject {
            dataset,
            target,
            seed,
            output,
        } => cmd_inject(&dataset, target, seed, &output),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Gradcheck {
            config,
            seed,
            nodes,
            features,
            classes,
            eps,
            tolerance,
            output,
        } => cmd_gradcheck(config.as_deref(), seed, [nodes, features, classes], eps, tolerance, output.as_deref()),
    }
}

struct Resolved {
    train: TrainConfig,
    dataset: PathBuf,
    output: PathBuf,
}

fn resolve(args: RunArgs) -> std::result::Result<Resolved, Failure> {
    let mut cfg = match &args.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    let dataset = args
        .dataset
        .or(cfg.dataset)
        .ok_or_else(|| Failure::Usage("no dataset given (use --dataset or `dataset =` in the config)".into()))?;
    let output = args
        .output
        .or(cfg.output)
        .ok_or_else(|| Failure::Usage("no output directory given (use --output or `output =` in the config)".into()))?;
    Ok(Resolved {
        train: cfg.train,
        dataset,
        output,
    })
}

fn create_dir(path: &Path) -> CliResult {
    fs::create_dir_all(path).map_err(|e| Failure::Data(Error::Io {
        path: path.to_path_buf(),
        source: e,
    }))
}

fn load_pair(dataset: &Path, k: usize) -> std::result::Result<(Graph, Graph), Failure> {
    let g = load_dataset(dataset)?;
    let g_f = knn_feature_graph(g.features(), k)?;
    Ok((g, g_f))
}

fn cmd_train(args: RunArgs) -> CliResult {
    let r = resolve(args)?;
    let (g, g_f) = load_pair(&r.dataset, r.train.k)?;
    log::info!(
        "training {} on {} nodes, {} edges",
        r.train.model.kind.as_str(),
        g.n_nodes(),
        g.n_edges()
    );
    let (params, trace) = train(&g, &g_f, &r.train)?;
    create_dir(&r.output)?;
    emit_trace(&trace, r.output.join(TRACE_FILE))?;
    write_json(&trace.metrics, r.output.join(METRICS_FILE))?;
    write_json(
        &SavedModel {
            config: r.train,
            params,
        },
        r.output.join(MODEL_FILE),
    )?;
    print_metrics(&trace.metrics);
    Ok(())
}

fn print_metrics(m: &FinalMetrics) {
    println!("best_epoch\t{}", m.best_epoch);
    println!("train_acc\t{:.6}", m.train_acc);
    println!("val_acc\t{:.6}", m.val_acc);
    println!("test_acc\t{:.6}", m.test_acc);
    println!("test_macro_f1\t{:.6}", m.test_macro_f1);
}

fn cmd_eval(model: &Path, dataset: &Path, seed: Option<u64>, output: Option<&Path>) -> CliResult {
    let saved: SavedModel = read_json(model)?;
    let cfg = &saved.config;
    let (g, g_f) = load_pair(dataset, cfg.k)?;
    let labels = g.labels().ok_or(Error::MissingLabels)?;
    let split_seed = derive_seed(seed.unwrap_or(cfg.seed), SPLIT_STREAM);
    let split = make_split(&g, cfg.labels_per_class, cfg.val_per_class, split_seed)?;
    let y_hat = saved.params.predict_proba(&graph_inputs(&g, &g_f)?)?;
    let (test_acc, test_macro_f1) = evaluate(&y_hat, labels, &split.test);
    let metrics = FinalMetrics {
        best_epoch: 0,
        train_acc: evaluate(&y_hat, labels, &split.train).0,
        val_acc: evaluate(&y_hat, labels, &split.validation).0,
        test_acc,
        test_macro_f1,
    };
    if let Some(path) = output {
        write_json(&metrics, path)?;
    }
    print_metrics(&metrics);
    Ok(())
}

fn cmd_homophily(dataset: &Path) -> CliResult {
    let g = load_dataset(dataset)?;
    println!("homophily\t{:.6}", homophily_ratio(&g)?);
    println!("heterophily\t{:.6}", heterophily_ratio(&g)?);
    Ok(())
}

fn cmd_knn_graph(dataset: &Path, k: usize, output: &Path) -> CliResult {
    let g = load_dataset(dataset)?;
    let g_f = knn_feature_graph(g.features(), k)?;
    // keep the labels so the feature graph is itself a usable dataset
    let out = Graph::with_classes(
        g.n_nodes(),
        g_f.edges(),
        g.labels().map(<[usize]>::to_vec),
        g.n_classes(),
        g.features().clone(),
    )?;
    save_dataset(&out, output)?;
    println!("edges\t{}", out.n_edges());
    Ok(())
}

fn cmd_inject(dataset: &Path, target: f64, seed: u64, output: &Path) -> CliResult {
    let g = load_dataset(dataset)?;
    let k = required_edges(&g, target)?;
    let out = inject_heterophilous_edges(&g, k, seed)?;
    save_dataset(&out, output)?;
    println!("edges_added\t{k}");
    println!("heterophily\t{:.6}", heterophily_ratio(&out)?);
    Ok(())
}

fn cmd_sweep(args: RunArgs) -> CliResult {
    let r = resolve(args)?;
    let (g, g_f) = load_pair(&r.dataset, r.train.k)?;
    let plan = SweepPlan::linear(&g, r.train.seed)?;
    let rows = heterophily_sweep(&g, &g_f, &plan, &r.train)?;
    create_dir(&r.output)?;
    emit_sweep(&rows, r.output.join(SWEEP_FILE))?;
    for row in &rows {
        println!("{:.6}\t{:.6}\t{:.6}", row.level, row.test_acc, row.test_macro_f1);
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> CliResult {
    let spec = SynthSpec {
        class_sizes: a.class_sizes,
        p_in: a.p_in,
        p_out: a.p_out,
        dim: a.dim,
        separation: a.separation,
        noise: a.noise,
        seed: a.seed,
    };
    spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let g = generate_synthetic(&spec)?;
    save_dataset(&g, &a.output)?;
    println!("nodes\t{}", g.n_nodes());
    println!("edges\t{}", g.n_edges());
    if g.n_edges() > 0 {
        println!("homophily\t{:.6}", homophily_ratio(&g)?);
    }
    Ok(())
}

/// Everything except the trainer settings comes from the flags.
fn cmd_gradcheck(
    config: Option<&Path>,
    seed: u64,
    [nodes, features, classes]: [usize; 3],
    eps: f64,
    tolerance: f64,
    output: Option<&Path>,
) -> CliResult {
    let mut cfg = match config {
        Some(p) => load_config(p)?.train,
        None => TrainConfig::default(),
    };
    cfg.seed = seed;
    if classes < 2 || nodes < classes.max(3) || features < classes {
        return Err(Failure::Usage(
            "gradcheck needs classes >= 2, nodes >= max(classes, 3), features >= classes".into(),
        ));
    }
    let per_class = nodes / classes;
    let mut sizes = vec![per_class; classes];
    sizes[0] += nodes - per_class * classes;
    let spec = SynthSpec {
        class_sizes: sizes,
        p_in: 0.5,
        p_out: 0.2,
        dim: features,
        separation: 1.0,
        noise: 1.0,
        seed: derive_seed(seed, 7),
    };
    let g = generate_synthetic(&spec)?;
    let g_f = knn_feature_graph(g.features(), cfg.k.min(nodes - 1))?;
    let all: Vec<usize> = (0..nodes).collect();
    let check = GradCheckConfig {
        eps,
        tolerance,
        ..GradCheckConfig::default()
    };
    let report = objective_gradcheck(&g, &g_f, &all, &cfg, &check)?;
    for p in &report.params {
        println!("param {:>2} {:?}\trel {:.3e}\tabs {:.3e}", p.index, p.shape, p.max_rel_error, p.max_abs_error);
    }
    println!("max_rel_error\t{:.3e}", report.max_rel_error);
    if let Some(path) = output {
        write_json(&report, path)?;
    }
    if report.passed() {
        println!("PASS");
        Ok(())
    } else {
        println!("FAIL");
        Err(Failure::Data(Error::InvalidConfig(format!(
            "gradient check failed: {:.3e} > {:.3e}",
            report.max_rel_error, report.tolerance
        ))))
    }
}
