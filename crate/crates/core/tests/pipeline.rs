use std::path::Path;
use std::process::Command;

use grnkit::expression::{preprocess, ExpressionMatrix, PreprocessConfig, Scale, SplitSpec};
use grnkit::grn::GeneVocabulary;
use grnkit::pipeline::{make_report, plot_projection, run_setting, RunConfig, RunManifest, RunOptions, RunStatus};
use grnkit::seed::rng;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

fn config(out: &Path, name: &str, arms: &str) -> RunConfig {
    RunConfig::from_toml_str(&format!(
        r#"
name = "{name}"
out_dir = "{out}"
k = 3
seeds = [0, 1]
n_datasets = 2
n_synthetic = 120

[data.linear_uniform]
n_tfs = 10
n_targets = 20
k = 3
n_cells = 500
coeff_range = [0.5, 1.5]
noise_scale = 0.1
seed = 4

[split]
test_size = 120
val_size = 30
n_top_genes = 30
min_cells_expressed = 1

[metrics.forest]
n_trees = 15

[gbm]
n_trees = 30
{arms}
"#,
        out = out.display()
    ))
    .unwrap()
}

const CONTROL: &str = "[[arm]]\nname = \"control\"\ngrn_source = \"control\"\n";

#[test]
fn control_results_do_not_depend_on_other_arms() {
    let dir = tempfile::tempdir().unwrap();
    let a = config(
        &dir.path().join("a"),
        "a",
        &format!("{CONTROL}[[arm]]\nname = \"truth\"\ngrn_source = \"truth\"\n"),
    );
    let b = config(
        &dir.path().join("b"),
        "b",
        &format!("[[arm]]\nname = \"random\"\ngrn_source = \"random\"\n[[arm]]\nname = \"stage1\"\ngrn_source = \"stage1\"\n{CONTROL}"),
    );
    let ma = run_setting(&a, &RunOptions::default()).unwrap();
    let mb = run_setting(&b, &RunOptions::default()).unwrap();
    let control = |m: &RunManifest| m.arms.iter().find(|x| x.name == "control").unwrap().per_seed.clone();
    assert_eq!(control(&ma), control(&mb));
    assert_eq!(ma.status, RunStatus::Complete);

    let report = make_report(&[ma, mb]).unwrap();
    assert_eq!(report.csv.lines().count(), 1 + 2 + 3);
    // baselines are never bold
    let md_control = report.markdown.lines().filter(|l| l.contains("| control |"));
    assert!(md_control.into_iter().all(|l| !l.contains("**")));
}

#[test]
fn reruns_reproduce_output_digests() {
    let dir = tempfile::tempdir().unwrap();
    let arms = format!("{CONTROL}[[arm]]\nname = \"statistical\"\nkb_source = \"truth\"\ngrn_source = \"statistical\"\n");
    let one = run_setting(&config(&dir.path().join("1"), "r", &arms), &RunOptions::default()).unwrap();
    let two = run_setting(&config(&dir.path().join("2"), "r", &arms), &RunOptions::default()).unwrap();
    assert_eq!(one.outputs, two.outputs);
    let loaded = RunManifest::load(&dir.path().join("1/manifest.json")).unwrap();
    assert_eq!(loaded.outputs, one.outputs);
}

#[test]
fn gene_selection_ignores_row_order() {
    let mut r = rng(2);
    let values = Array2::from_shape_fn((200, 40), |(_, j)| (r.random::<f64>() * (1 + j % 7) as f64).floor());
    let genes = GeneVocabulary::new((0..40).map(|i| format!("G{i}"))).unwrap();
    let m = ExpressionMatrix::from_rows(values, genes, Scale::Raw).unwrap();
    let mut rows: Vec<usize> = (0..200).collect();
    rows.shuffle(&mut r);
    let shuffled = m.select_cells(&rows);
    let split = SplitSpec { test_size: 40, val_size: 20, seed: 1 };
    let cfg = PreprocessConfig { min_cells_expressed: 5, n_top_genes: 15 };
    let (a, _, _) = preprocess(&m, &cfg, &split).unwrap();
    let (b, _, _) = preprocess(&shuffled, &cfg, &split).unwrap();
    assert_eq!(a.genes(), b.genes());
}

#[test]
fn projection_writes_wellformed_svg() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(3);
    let genes = GeneVocabulary::new((0..6).map(|i| format!("G{i}"))).unwrap();
    let m = |shift: f64, r: &mut rand_chacha::ChaCha8Rng| {
        let v = Array2::from_shape_fn((40, 6), |_| (r.random::<f64>() * 10.0 + shift).floor());
        ExpressionMatrix::from_rows(v, genes.clone(), Scale::Raw).unwrap()
    };
    let (real, syn) = (m(1.0, &mut r), m(3.0, &mut r));
    let svg = dir.path().join("p.svg");
    let csv = dir.path().join("p.csv");
    let coords = plot_projection(&real, &syn, 2, &svg, &csv).unwrap();
    assert_eq!(coords.nrows(), 80);
    let text = std::fs::read_to_string(&svg).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let circles = doc.descendants().filter(|n| n.has_tag_name("circle")).count();
    assert!(circles >= 80);
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_grnkit")).args(args).output().unwrap()
}

#[test]
fn cli_exit_codes_separate_config_and_stage_failures() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\nunknown_key = 1\n").unwrap();
    assert_eq!(cli(&["--config", bad.to_str().unwrap(), "run"]).status.code(), Some(2));

    // more genes requested than exist: fails while preprocessing
    let cfg = config(&dir.path().join("out"), "s", CONTROL);
    let mut text = cfg.to_toml_string();
    text = text.replace("n_top_genes = 30", "n_top_genes = 500");
    let path = dir.path().join("stage.toml");
    std::fs::write(&path, text).unwrap();
    let out = cli(&["--config", path.to_str().unwrap(), "run"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    let ok = config(&dir.path().join("ok"), "ok", CONTROL);
    let path = dir.path().join("ok.toml");
    std::fs::write(&path, ok.to_toml_string()).unwrap();
    let out = cli(&["--config", path.to_str().unwrap(), "--seed", "5", "run"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("| control |"));
    let m = RunManifest::load(&dir.path().join("ok/manifest.json")).unwrap();
    assert_eq!(m.config.seeds, vec![5]);
}
