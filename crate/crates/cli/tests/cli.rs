use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use osteo::models::checkpoint;

fn osteo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_osteo")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = osteo(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    for class in fs::read_dir(root).unwrap() {
        for f in fs::read_dir(class.unwrap().path()).unwrap() {
            let p = f.unwrap().path();
            files.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
        }
    }
    files
}

/// A small synthetic dataset and a binary CNN trained on it, shared by tests.
fn fixture() -> &'static (tempfile::TempDir, PathBuf, PathBuf) {
    static CELL: OnceLock<(tempfile::TempDir, PathBuf, PathBuf)> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let run = dir.path().join("run");
        ok(&["synth", "--out", s(&data), "--per-class", "8", "--seed", "4"]);
        ok(&["train", "--arch", "cnn", "--task", "binary", "--preset", "tiny", "--epochs", "2", "--data", s(&data), "--out", s(&run)]);
        (dir, data, run.join("model.oshx"))
    })
}

#[test]
fn synth_writes_one_folder_per_class() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--out", s(dir.path()), "--per-class", "16", "--side", "32"]);
    let files = tree(dir.path());
    assert_eq!(files.len(), 64);
    for class in ["NT", "NVT", "VT", "NVR"] {
        assert_eq!(files.keys().filter(|p| p.starts_with(class)).count(), 16);
    }
}

#[test]
fn synth_is_reproducible_per_seed() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (d, seed) in [(&a, "3"), (&b, "3"), (&c, "4")] {
        ok(&["synth", "--out", s(d.path()), "--per-class", "2", "--side", "16", "--seed", seed]);
    }
    assert_eq!(tree(a.path()), tree(b.path()));
    assert_ne!(tree(a.path()), tree(c.path()));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(osteo(&["synth"]).status.code(), Some(2));
    let out = osteo(&["train", "--arch", "mlp", "--task", "binary", "--data", "x", "--out", "y"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mlp"));
    assert_eq!(osteo(&["train", "--arch", "cnn", "--task", "five", "--data", "x", "--out", "y"]).status.code(), Some(2));
    assert_eq!(osteo(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn binary_training_writes_a_two_class_head() {
    let (_, _, model) = fixture();
    let ck = checkpoint::load(model).unwrap();
    assert_eq!(ck.model.num_classes(), 2);
    assert_eq!(ck.info.class_names, ["NT", "VT"]);
    let run = model.parent().unwrap();
    for f in ["config.toml", "manifest.json", "epochs.csv", "report_val.json"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let log = fs::read_to_string(run.join("epochs.csv")).unwrap();
    assert!(log.starts_with("epoch,train_loss,val_loss,val_acc,seconds\n"));
    assert_eq!(log.lines().count(), 3);
}

#[test]
fn eval_formats_agree() {
    let (_, data, model) = fixture();
    let csv = ok(&["eval", "--checkpoint", s(model), "--data", s(data), "--format", "csv"]);
    let md = ok(&["eval", "--checkpoint", s(model), "--data", s(data)]);
    let csv_row: Vec<String> = csv.lines().nth(1).unwrap().split(',').map(str::to_string).collect();
    let md_row: Vec<String> = md.lines().nth(2).unwrap().trim_matches('|').split('|').map(|c| c.trim().to_string()).collect();
    assert_eq!(csv_row, md_row);
    assert_eq!(csv_row[0], "CNN");
}

#[test]
fn predict_prints_a_sorted_distribution() {
    let (_, data, model) = fixture();
    let image = fs::read_dir(data.join("VT")).unwrap().next().unwrap().unwrap().path();
    let out = ok(&["predict", "--checkpoint", s(model), "--image", s(&image)]);
    assert_eq!(out, ok(&["predict", "--checkpoint", s(model), "--image", s(&image)]));
    let probs: Vec<f64> = out.lines().map(|l| l.split('\t').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(probs.len(), 2);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-5);
    assert!(probs[0] >= probs[1]);
}

#[test]
fn undecodable_image_exits_with_one_and_names_it() {
    let (dir, _, model) = fixture();
    let bad = dir.path().join("broken.png");
    fs::write(&bad, b"not a png").unwrap();
    let out = osteo(&["predict", "--checkpoint", s(model), "--image", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken.png"));
}

#[test]
fn report_accepts_json_reports() {
    let (_, data, model) = fixture();
    let json = model.parent().unwrap().join("report_val.json");
    let out = ok(&["report", s(&json), s(model), "--data", s(data)]);
    assert_eq!(out.lines().count(), 4);
    assert_eq!(osteo(&["report", s(model)]).status.code(), Some(2));
}

#[test]
fn gradcheck_exit_codes() {
    let out = ok(&["gradcheck", "--seed", "3"]);
    assert!(out.lines().last().unwrap().starts_with("all "));
    let bad = osteo(&["gradcheck", "--inject-fault"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("faulty_double"));
}
