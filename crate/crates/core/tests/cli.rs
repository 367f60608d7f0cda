use std::path::Path;
use std::process::Command;

use hhar::harness::cli::run;
use hhar::{Dataset, Report};

fn hhar(args: &[&str]) -> i32 {
    run(std::iter::once("hhar").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: &str = "depth=2,branching=2,dim=6,per_leaf=15,seed=1";
const FAST: [&str; 6] = ["--width", "4", "--proj-width", "3", "--epochs", "3"];

#[test]
fn synth_writes_a_loadable_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    assert_eq!(hhar(&["synth", "--depth", "2", "--branching", "3", "--dim", "5", "--per-leaf", "4", "--out", p(&out)]), 0);
    let data = Dataset::load(out.join("features.csv"), out.join("hierarchy.tsv")).unwrap();
    assert_eq!((data.len(), data.dim(), data.hierarchy.len()), (36, 5, 12));
    assert!(out.join("synthetic.spec").is_file());
}

#[test]
fn train_then_eval_reproduces_the_logged_validation_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let mut args = vec!["train", "--synthetic", SMALL, "--seed", "4", "--out", p(&run_dir)];
    args.extend(FAST);
    assert_eq!(hhar(&args), 0);
    let log = std::fs::read_to_string(run_dir.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3);
    let last: serde_json::Value = serde_json::from_str(log.lines().last().unwrap()).unwrap();

    let eval_dir = dir.path().join("eval");
    let ckpt = run_dir.join("model.ckpt");
    assert_eq!(hhar(&["eval", "--checkpoint", p(&ckpt), "--out", p(&eval_dir)]), 0);
    let report = Report::from_json(&std::fs::read_to_string(eval_dir.join("report.json")).unwrap()).unwrap();
    let acc = report.row("val").unwrap().metrics.unwrap().single_label_accuracy;
    assert_eq!(acc, last["val_acc"].as_f64().unwrap());
}

#[test]
fn training_data_can_come_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(hhar(&["synth", "--depth", "1", "--branching", "3", "--per-leaf", "10", "--out", p(&data)]), 0);
    let features = data.join("features.csv");
    let hierarchy = data.join("hierarchy.tsv");
    let mut args = vec!["train", "--features", p(&features), "--hierarchy", p(&hierarchy), "--seed", "1"];
    args.extend(FAST);
    let out = dir.path().join("a");
    args.extend(["--out", p(&out)]);
    assert_eq!(hhar(&args), 0);
    let mut args = vec!["train", "--data", p(&data), "--seed", "1", "--graph", "adaptive", "--propagation", "off"];
    args.extend(FAST);
    let out = dir.path().join("b");
    args.extend(["--out", p(&out)]);
    assert_eq!(hhar(&args), 0);
}

#[test]
fn ablate_report_has_all_variants() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ablate");
    let mut args = vec!["ablate", "--synthetic", SMALL, "--seed", "2", "--repeats", "2", "--out", p(&out)];
    args.extend(FAST);
    assert_eq!(hhar(&args), 0);
    let text = std::fs::read_to_string(out.join("report.json")).unwrap();
    let report = Report::from_json(&text).unwrap();
    assert_eq!(report.rows.len(), 8);
    assert!(report.margins.contains_key("full_minus_no_graph"));
    assert!(report.margins.contains_key("full_minus_ce_only"));
    assert_eq!(report.rows[0].per_seed.len(), 2);
    let table = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(table.contains("no_feature_propagation"));
}

#[test]
fn baseline_reports_knn_and_mlp() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b");
    assert_eq!(hhar(&["baseline", "--synthetic", SMALL, "--epochs", "5", "--hidden", "8", "--out", p(&out)]), 0);
    let report = Report::from_json(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let names: Vec<&str> = report.rows.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, ["knn_k7", "mlp_h8"]);
}

#[test]
fn exit_codes() {
    let bin = env!("CARGO_BIN_EXE_hhar");
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| Command::new(bin).args(args).current_dir(dir.path()).output().unwrap().status.code();
    assert_eq!(code(&["--help"]), Some(0));
    assert_eq!(code(&["train", "--synthetic", SMALL, "--bogus"]), Some(1));
    // --seed is mandatory for train and ablate
    assert_eq!(code(&["train", "--synthetic", SMALL]), Some(1));
    assert_eq!(code(&["ablate", "--synthetic", SMALL]), Some(1));
    assert_eq!(code(&["train", "--synthetic", "depth=0", "--seed", "1"]), Some(1));
    assert_eq!(code(&["train", "--synthetic", SMALL, "--seed", "1", "--losses", "kl"]), Some(1));
    assert_eq!(code(&["eval", "--checkpoint", "missing.ckpt"]), Some(2));
    // a learning rate this large overflows the loss on the first batch
    assert_eq!(
        code(&["train", "--synthetic", SMALL, "--seed", "1", "--lr", "1e300", "--epochs", "3", "--out", "x"]),
        Some(2)
    );
}

#[test]
fn default_output_directory_comes_from_the_environment() {
    let bin = env!("CARGO_BIN_EXE_hhar");
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(bin)
        .args(["synth", "--per-leaf", "2", "--depth", "1"])
        .env(hhar::harness::cli::OUT_DIR_ENV, dir.path().join("env-out"))
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    assert!(dir.path().join("env-out").join("features.csv").is_file());
}
