use std::path::Path;
use std::process::{Command, Output};

fn clp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clp"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_dataset(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(dir.join("edges.tsv"), "0\t1\n1\t2\n2\t3\n3\t0\n").unwrap();
    std::fs::write(dir.join("features.tsv"), "0.1\t1\n0.2\t0\n0.3\t1\n0.4\t0\n").unwrap();
    std::fs::write(dir.join("labels.tsv"), "0\t0\n1\t1\n2\t0\n3\t1\n").unwrap();
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(clp(&["run", "--bogus"]).status.code(), Some(1));
    assert_eq!(clp(&["run", "--method", "gcn", "--preset", "syn1"]).status.code(), Some(1));
    assert_eq!(clp(&["run"]).status.code(), Some(1));
    assert_eq!(clp(&["run", "--preset", "syn1", "--alpha", "1.5"]).status.code(), Some(1));
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = clp(&["inspect", "--dataset", s(&dir.path().join("nope"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_edges_report_line() {
    let dir = tempfile::tempdir().unwrap();
    tiny_dataset(dir.path());
    std::fs::write(dir.path().join("edges.tsv"), "0\t1\nx\t2\n").unwrap();
    let out = clp(&["inspect", "--dataset", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains('2'));
}

#[test]
fn inspect_reports_cycle_statistics() {
    let dir = tempfile::tempdir().unwrap();
    tiny_dataset(dir.path());
    let out = clp(&["inspect", "--dataset", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let diag: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(diag["edge_homophily"], 0.0);
    assert_eq!(diag["arc_count"], 8);
}

#[test]
fn synth_then_run_then_rerun_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = clp(&["synth", "--preset", "syn1", "--scale", "0.05", "--homophily", "0.3", "--out", s(&data)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(data.join("manifest.json").exists());

    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let target = dir.path().join(run);
        let out = clp(&[
            "run", "--dataset", s(&data), "--seeds", "0,1", "--method", "clp", "--alpha", "0.2,0.6",
            "--scheme", "medium", "--out", s(&target),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        for f in ["report.json", "per_seed.csv", "candidates.csv", "seed0/beliefs.tsv", "seed1/compatibility.csv"] {
            assert!(target.join(f).exists(), "{f}");
        }
        reports.push(std::fs::read(target.join("per_seed.csv")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn train_writes_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let out = clp(&[
        "train", "--preset", "syn2", "--scale", "0.05", "--seeds", "3", "--out", s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let bytes = std::fs::read(dir.path().join("seed3/mlp.bin")).unwrap();
    assert!(bytes.starts_with(b"CLPMLP01"));
    let log = std::fs::read_to_string(dir.path().join("seed3/training_log.csv")).unwrap();
    assert!(log.starts_with("epoch,train_loss,val_acc\n"));
}

#[test]
fn sweep_and_compat_quality_csv_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let out = clp(&[
        "sweep", "--preset", "syn1", "--scale", "0.05", "--homophily", "0.0001,0.5,0.9999", "--method", "clp",
        "--seeds", "0", "--alpha", "0.5", "--out", s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);

    let out = clp(&[
        "compat-quality", "--preset", "syn2", "--scale", "0.05", "--seeds", "0", "--alpha", "0.5",
        "--out", s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("compat_quality.csv")).unwrap();
    assert!(csv.starts_with("scheme,label_rate,mean_dist,std_dist,mean_acc\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn config_file_is_read_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    tiny_dataset(&dir.path().join("d"));
    let cfg = serde_json::json!({
        "dataset": {"dir": dir.path().join("d")},
        "seeds": [0],
        "method": "lp",
        "scheme": {"custom": {"train": 0.25, "validation": 0.25}},
        "alpha_grid": [0.5],
    });
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let out = clp(&["run", "--config", s(&path)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = clp(&["run", "--config", s(&path), "--alpha", "2"]);
    assert_eq!(out.status.code(), Some(1));
}
