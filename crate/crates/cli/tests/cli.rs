use std::fs;
use std::path::Path;
use std::process::Command;

use dualgcn::graph::{homophily_ratio, Graph};
use dualgcn::io::{load_dataset, parse_trace, save_dataset};
use dualgcn::tensor::Matrix;
use dualgcn_cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE, METRICS_FILE, MODEL_FILE, SWEEP_FILE, TRACE_FILE};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dualgcn"))
}

fn argv(args: &[&str]) -> Vec<String> {
    std::iter::once("dualgcn").chain(args.iter().copied()).map(String::from).collect()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn four_node_fixture(dir: &Path) {
    let x = Matrix::from_rows(&[[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.2, 0.8]]);
    let g = Graph::new(4, [(0, 1), (1, 2), (2, 3)], Some(vec![0, 0, 1, 1]), x).unwrap();
    save_dataset(&g, dir).unwrap();
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--class-sizes", "30,30", "--p-in", "0.15", "--p-out", "0.02", "--dim", "6"];
    args.extend_from_slice(extra);
    args.extend_from_slice(&["--output", path_str(dir)]);
    assert_eq!(run(argv(&args)), EXIT_OK);
}

fn write_config(path: &Path, body: &str) {
    fs::write(path, body).unwrap();
}

const SMALL: &str = "hidden = 8\nmlp_hidden = 8\nepochs = 15\npatience = 15\nlabels_per_class = 5\nval_per_class = 5\nk = 4\n";

#[test]
fn homophily_on_four_node_fixture() {
    let dir = tempfile::tempdir().unwrap();
    four_node_fixture(dir.path());
    let out = bin().args(["homophily", "--dataset", path_str(dir.path())]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK));
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        "homophily\t0.666667\nheterophily\t0.333333\n"
    );
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(run(argv(&[])), EXIT_USAGE);
    assert_eq!(run(argv(&["--help"])), EXIT_OK);
}

#[test]
fn missing_dataset_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    assert_eq!(run(argv(&["homophily", "--dataset", path_str(&missing)])), EXIT_DATA);
}

#[test]
fn unknown_config_key_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    synth(&dir.path().join("data"), &[]);
    let cfg = dir.path().join("run.cfg");
    write_config(&cfg, "learning_rate = 0.1\n");
    let code = run(argv(&[
        "train",
        "--config",
        path_str(&cfg),
        "--dataset",
        path_str(&dir.path().join("data")),
        "--output",
        path_str(&dir.path().join("out")),
    ]));
    assert_eq!(code, EXIT_DATA);
}

#[test]
fn train_writes_outputs_and_eval_reproduces_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, &["--seed", "4"]);
    let cfg = dir.path().join("run.cfg");
    write_config(&cfg, &format!("{SMALL}dataset = {}\n", data.display()));
    let out = dir.path().join("out");
    let code = run(argv(&["train", "--config", path_str(&cfg), "--output", path_str(&out), "--seed", "9"]));
    assert_eq!(code, EXIT_OK);
    let trace = parse_trace(&fs::read_to_string(out.join(TRACE_FILE)).unwrap(), &out).unwrap();
    assert_eq!(trace.len(), 15);
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join(METRICS_FILE)).unwrap()).unwrap();

    let eval_out = dir.path().join("eval.json");
    let code = run(argv(&[
        "eval",
        "--model",
        path_str(&out.join(MODEL_FILE)),
        "--dataset",
        path_str(&data),
        "--output",
        path_str(&eval_out),
    ]));
    assert_eq!(code, EXIT_OK);
    let eval: serde_json::Value = serde_json::from_str(&fs::read_to_string(eval_out).unwrap()).unwrap();
    assert_eq!(eval["test_acc"], metrics["test_acc"]);
    assert_eq!(eval["test_macro_f1"], metrics["test_macro_f1"]);
}

#[test]
fn zero_learning_rate_gives_flat_loss_trace() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, &[]);
    let cfg = dir.path().join("run.cfg");
    write_config(&cfg, &format!("{SMALL}lr = 0\n"));
    let out = dir.path().join("out");
    let code = run(argv(&[
        "train",
        "--config",
        path_str(&cfg),
        "--dataset",
        path_str(&data),
        "--output",
        path_str(&out),
    ]));
    assert_eq!(code, EXIT_OK);
    let trace = parse_trace(&fs::read_to_string(out.join(TRACE_FILE)).unwrap(), &out).unwrap();
    assert!(trace.iter().all(|r| r.loss_total == trace[0].loss_total));
}

#[test]
fn inject_lowers_homophily_and_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, &["--seed", "2"]);
    let before = homophily_ratio(&load_dataset(&data).unwrap()).unwrap();
    let inject = |name: &str| {
        let out = dir.path().join(name);
        let code = run(argv(&[
            "inject",
            "--dataset",
            path_str(&data),
            "--target",
            "0.6",
            "--seed",
            "5",
            "--output",
            path_str(&out),
        ]));
        assert_eq!(code, EXIT_OK);
        fs::read_to_string(out.join("edges.tsv")).unwrap()
    };
    assert_eq!(inject("a"), inject("b"));
    let after = load_dataset(dir.path().join("a")).unwrap();
    let h = homophily_ratio(&after).unwrap();
    assert!(h <= before);
    assert!((1.0 - h - 0.6).abs() <= 0.01);
    let below = run(argv(&["inject", "--dataset", path_str(&data), "--target", "0.0", "--output", path_str(&dir.path().join("c"))]));
    assert_eq!(below, EXIT_DATA);
}

#[test]
fn knn_graph_keeps_labels() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, &[]);
    let out = dir.path().join("knn");
    assert_eq!(run(argv(&["knn-graph", "--dataset", path_str(&data), "--k", "3", "--output", path_str(&out)])), EXIT_OK);
    let (g, f) = (load_dataset(&data).unwrap(), load_dataset(&out).unwrap());
    assert_eq!(g.labels(), f.labels());
    assert_eq!(g.features(), f.features());
    assert!(f.n_edges() >= 3 * 60 / 2);
}

#[test]
fn synth_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    synth(&a, &["--seed", "3"]);
    synth(&b, &["--seed", "3"]);
    synth(&c, &["--seed", "4"]);
    let read = |p: &Path| fs::read(p.join("features.tsv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(run(argv(&["synth", "--p-in", "2", "--output", path_str(&c)])), EXIT_USAGE);
}

#[test]
fn sweep_writes_one_row_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let args = ["synth", "--class-sizes", "30,30", "--p-in", "0.03", "--p-out", "0.005", "--dim", "6", "--output", path_str(&data)];
    assert_eq!(run(argv(&args)), EXIT_OK);
    let cfg = dir.path().join("run.cfg");
    write_config(&cfg, &format!("{SMALL}model = gcn\nepochs = 5\n"));
    let out = dir.path().join("out");
    let code = run(argv(&["sweep", "--config", path_str(&cfg), "--dataset", path_str(&data), "--output", path_str(&out)]));
    assert_eq!(code, EXIT_OK);
    let text = fs::read_to_string(out.join(SWEEP_FILE)).unwrap();
    assert_eq!(text.lines().count(), 11);
}

#[test]
fn gradcheck_passes_on_default_instance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gc.cfg");
    write_config(&cfg, "hidden = 8\nmlp_hidden = 8\nlambda = 1\nbeta = 1\ngamma = 1\n");
    let out = bin().args(["gradcheck", "--config", path_str(&cfg), "--seed", "1"]).output().unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK), "{stdout}");
    assert!(stdout.ends_with("PASS\n"));
}
