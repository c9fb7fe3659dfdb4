use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mlss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlss")).args(args).output().expect("spawn mlss")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn csv_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(2)
        .map(str::to_owned)
        .collect()
}

#[test]
fn describe_prints_conventions() {
    let o = mlss(&["--describe"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for key in ["CRC", "eBCH", "LDPC", "model"] {
        assert!(text.contains(key), "missing {key} in:\n{text}");
    }
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&mlss(&[])), 2);
    assert_eq!(code(&mlss(&["ber", "--no-such-flag"])), 2);
    assert_eq!(code(&mlss(&["ber", "--baseline", "dsss", "--ebn0", "3,1"])), 2);
    assert_eq!(code(&mlss(&["ber", "--baseline", "fhss"])), 2);
    assert_eq!(code(&mlss(&["train", "--arch", "cnn"])), 2);
    assert_eq!(code(&mlss(&["analyze", "--gaussian", "true", "--pn-degree", "5"])), 2);
    assert_eq!(code(&mlss(&["--config", "/nonexistent/mlss.toml", "baseline"])), 2);
    assert_eq!(code(&mlss(&["--help"])), 0);
}

#[test]
fn baseline_writes_a_tagged_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.csv");
    let o = mlss(&[
        "baseline", "--ebn0", "0,2", "--max-bits", "100000", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.lines().next().unwrap().contains("config_sha256="));
    assert_eq!(csv_rows(&out).len(), 2);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mlss.toml");
    let out = dir.path().join("b.csv");
    fs::write(
        &cfg,
        format!("[ber]\nbaseline = \"dsss\"\nebn0 = \"0,1,2\"\nmax_bits = 50000\nout = {:?}\n", out),
    )
    .unwrap();
    let o = mlss(&["--config", cfg.to_str().unwrap(), "ber"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_rows(&out).len(), 3);
    let o = mlss(&["--config", cfg.to_str().unwrap(), "ber", "--ebn0", "4"]);
    assert_eq!(code(&o), 0);
    assert_eq!(csv_rows(&out).len(), 1);
    let ebn0: f64 = csv_rows(&out)[0].split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(ebn0, 4.0);
}

#[test]
fn unconverged_points_fail_the_check() {
    let o = mlss(&[
        "ber", "--baseline", "dsss", "--ebn0", "12", "--max-bits", "20000", "--check",
    ]);
    assert_eq!(code(&o), 4);
    let o = mlss(&["ber", "--baseline", "dsss", "--ebn0", "0", "--check"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn pn_stream_fails_the_featurelessness_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pn");
    let o = mlss(&[
        "analyze", "--pn-degree", "7", "--samples", "65536", "--check", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 4);
    for f in ["correlation.csv", "moments.csv", "histogram.csv", "summary.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn train_then_evaluate_a_small_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.mlss");
    let o = mlss(&[
        "train", "--arch", "onehot", "--k", "3", "--hidden", "24", "--epochs", "20", "--out",
        model.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let log: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(model.with_extension("json")).unwrap()).unwrap();
    assert_eq!(log["k"], 3);
    assert_eq!(log["param_count"], 8 * 24 + 24 + 24 * 8 + 8);
    let hist = log["loss_history"].as_array().unwrap();
    assert!(!hist.is_empty() && hist.len() <= 21);

    let out = dir.path().join("ber.csv");
    let o = mlss(&[
        "ber", "--model", model.to_str().unwrap(), "--ebn0", "0,3", "--max-bits", "20000", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_rows(&out).len(), 2);
    // LDPC needs a direct k = 32 model
    let o = mlss(&["ber", "--model", model.to_str().unwrap(), "--fec", "ldpc", "--ebn0", "3"]);
    assert_ne!(code(&o), 0);
}
