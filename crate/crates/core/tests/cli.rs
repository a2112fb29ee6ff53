use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sddgat::data::load_csv;
use sddgat::model::Checkpoint;

fn sddgat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sddgat"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = sddgat(args);
    assert!(
        out.status.success(),
        "{:?}: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

fn gen(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let out = dir.join(format!("gen{}_{}", n, seed));
    ok(&["gen-data", "--out", &s(&out), "--n", &n.to_string(), "--seed", &seed.to_string(), "--bearing", "35"]);
    out.join("data.csv")
}

fn train(dir: &Path, data: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let o = s(&out);
    let mut args = vec!["train", "--data", data.to_str().unwrap(), "--out", &o];
    if !extra.contains(&"--epochs") {
        args.extend(["--epochs", "40"]);
    }
    args.extend(extra);
    ok(&args);
    out
}

#[test]
fn gen_data_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(dir.path(), 500, 7);
    let b = {
        let out = dir.path().join("again");
        ok(&["gen-data", "--out", &s(&out), "--n", "500", "--seed", "7", "--bearing", "35"]);
        out.join("data.csv")
    };
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());

    let table = load_csv(&a).unwrap();
    assert_eq!(table.len(), 500);
    let copy = dir.path().join("copy.csv");
    sddgat::data::write_csv(&table, &copy).unwrap();
    assert_eq!(std::fs::read(&copy).unwrap(), bytes);
    assert_eq!(load_csv(&copy).unwrap(), table);
}

#[test]
fn every_output_directory_has_one_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), 200, 1);
    let t = train(dir.path(), &data, "t", &["--seed", "1"]);
    for d in [data.parent().unwrap(), t.as_path()] {
        let manifests: Vec<_> = std::fs::read_dir(d)
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("manifest"))
            .collect();
        assert_eq!(manifests.len(), 1, "{}", d.display());
    }
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(t.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "train");
    assert_eq!(m["seed"], 1);
    // defaults are echoed, not left implicit
    for key in ["lr", "patience", "lambda_smooth", "k", "sigma", "epsilon", "hidden", "variant", "task"] {
        assert!(m["config"][key].is_string(), "missing {}", key);
    }
    assert_eq!(m["config"]["task"], "regression");
}

#[test]
fn invalid_values_exit_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = sddgat(&["gen-data", "--out", &s(&dir.path().join("x")), "--n", "5"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_nodes"));

    let data = gen(dir.path(), 100, 2);
    let out = sddgat(&["train", "--data", &s(&data), "--out", &s(&dir.path().join("k0")), "--k", "0"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("k must be"));
    assert!(!dir.path().join("k0").exists(), "nothing is written before validation");
}

#[test]
fn bad_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), 100, 3);
    let out_dir = s(&dir.path().join("x"));
    let out = sddgat(&["experiment", "--data", &s(&data), "--out", &out_dir, "--kind", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    let out = sddgat(&["train", "--data", &s(&data), "--out", &out_dir, "--variant", "tiny"]);
    assert_eq!(out.status.code(), Some(2));

    let cfg = dir.path().join("c.txt");
    std::fs::write(&cfg, "unknown_knob = 3\n").unwrap();
    let out = sddgat(&["train", "--data", &s(&data), "--out", &out_dir, "--config", &s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown_knob"));

    let out = sddgat(&["train", "--data", &s(&dir.path().join("missing.csv")), "--out", &out_dir]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), 150, 4);
    let cfg = dir.path().join("c.txt");
    std::fs::write(&cfg, "# run settings\nlr = 0.02\npatience = 7\nlambda-smooth = 0\n").unwrap();
    let t = train(dir.path(), &data, "t", &["--config", &s(&cfg), "--lr", "0.005"]);
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(t.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["lr"], "0.005");
    assert_eq!(m["config"]["patience"], "7");
    assert_eq!(m["config"]["lambda_smooth"], "0");
}

#[test]
fn eval_reproduces_training_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), 250, 5);
    let t = train(dir.path(), &data, "t", &["--task", "dual", "--seed", "2"]);
    let ckpt = s(&t.join("model.ckpt"));
    let e = dir.path().join("e");
    ok(&["eval", "--checkpoint", &ckpt, "--data", &s(&data), "--out", &s(&e)]);
    let read = |d: &Path| std::fs::read_to_string(d.join("metrics.json")).unwrap();
    assert_eq!(read(&t), read(&e));

    let e0 = dir.path().join("e0");
    ok(&["eval", "--checkpoint", &ckpt, "--data", &s(&data), "--out", &s(&e0), "--noise", "0"]);
    assert_eq!(read(&t), read(&e0));

    let noisy = dir.path().join("noisy");
    ok(&["eval", "--checkpoint", &ckpt, "--data", &s(&data), "--out", &s(&noisy), "--noise", "0.5"]);
    assert_ne!(read(&t), read(&noisy));

    let all = dir.path().join("all");
    let out = ok(&["eval", "--checkpoint", &ckpt, "--data", &s(&data), "--out", &s(&all), "--split", "all"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("n_eval=250"));
}

#[test]
fn eval_rejects_incompatible_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), 120, 6);
    let t = train(dir.path(), &data, "t", &[]);

    // drop one soil category entirely: one fewer one-hot column
    let text = std::fs::read_to_string(&data).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let dropped = lines.clone().next().unwrap().split(',').nth(6).unwrap().to_string();
    let kept: Vec<&str> = lines.filter(|l| l.split(',').nth(6) != Some(dropped.as_str())).collect();
    let narrow = dir.path().join("narrow.csv");
    std::fs::write(&narrow, format!("{}\n{}\n", header, kept.join("\n"))).unwrap();

    let out = sddgat(&[
        "eval",
        "--checkpoint",
        &s(&t.join("model.ckpt")),
        "--data",
        &s(&narrow),
        "--out",
        &s(&dir.path().join("e")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("expects 6") && err.contains("has 5"), "{}", err);
}

#[test]
fn no_direction_checkpoint_has_short_attention_vectors() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), 120, 8);
    let t = train(dir.path(), &data, "t", &["--variant", "no_direction", "--hidden", "7", "--epochs", "3"]);
    let ckpt = Checkpoint::load(&t.join("model.ckpt")).unwrap();
    for name in ["spatial.0.att", "spatial.1.att", "feature.0.att", "feature.1.att"] {
        assert_eq!(ckpt.model.param(name).unwrap().len(), 14, "{}", name);
    }
}

#[test]
fn region_split_tests_on_held_out_region() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), 200, 9);
    let t = train(
        dir.path(),
        &data,
        "t",
        &["--split", "region", "--holdout-region", "2", "--epochs", "5"],
    );
    let table = load_csv(&data).unwrap();
    let in_region = table.region.iter().filter(|&&r| r == 2).count();
    let metrics = std::fs::read_to_string(t.join("metrics.txt")).unwrap();
    assert!(metrics.contains(&format!("n_eval={}", in_region)), "{}", metrics);
}

#[test]
fn experiment_and_graph_stats_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), 150, 10);
    let x = dir.path().join("x");
    ok(&["experiment", "--data", &s(&data), "--out", &s(&x), "--kind", "noise", "--epochs", "5"]);
    let csv = std::fs::read_to_string(x.join("report.csv")).unwrap();
    let levels: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(3).unwrap()).collect();
    assert_eq!(levels, ["0.01", "0.05", "0.1", "0.2"]);
    assert!(x.join("manifest.json").exists() && x.join("report.txt").exists());

    let g = dir.path().join("g");
    let out = ok(&["graph-stats", "--data", &s(&data), "--out", &s(&g), "--edges"]);
    let stats: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stats["n_nodes"], 150);
    assert!((stats["spatial"]["mean_degree"].as_f64().unwrap() - 8.0).abs() < 1.0);
    let edges = std::fs::read_to_string(g.join("edges.csv")).unwrap();
    assert!(edges.starts_with("graph,src,dst,weight"));
}
