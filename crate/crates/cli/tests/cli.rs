use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use advcomm_core::harness::ExperimentConfig;
use advcomm_core::ldpc::{build_regular_ldpc, write_alist, CodeRate};
use advcomm_core::math::RngStream;

const SMALL: &str = r#"
seed = 3
frames = 2
snr_db = [9.0]
attacks = ["vs", "pga", "none"]
cache_dir = ""

[semantic]
train_samples = 256

[semantic.training]
epochs = 10
"#;

fn advcomm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_advcomm"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

#[test]
fn sweep_reruns_are_byte_identical() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut outputs = Vec::new();
    for d in &dirs {
        fs::write(d.path().join("small.toml"), SMALL).unwrap();
        let out = advcomm(d.path(), &["sweep", "--config", "small.toml", "--out", "res.csv", "--trace"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let files: Vec<Vec<u8>> = ["res.csv", "res.summary.csv", "res.traces.jsonl"]
            .iter()
            .map(|f| fs::read(d.path().join(f)).unwrap())
            .collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
    let csv = String::from_utf8(outputs[0][0].clone()).unwrap();
    assert!(csv.starts_with("snr_db,system,attack,frame_id,rho_star"));
    // 2 frames × (vs, none) classical + (pga, none) semantic
    assert_eq!(csv.lines().count(), 1 + 8);
}

#[test]
fn seed_flag_changes_results() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("small.toml"), SMALL).unwrap();
    for (seed, out) in [("3", "a.csv"), ("4", "b.csv")] {
        let o = advcomm(d.path(), &["sweep", "--config", "small.toml", "--seed", seed, "--out", out]);
        assert!(o.status.success());
    }
    assert_ne!(fs::read(d.path().join("a.csv")).unwrap(), fs::read(d.path().join("b.csv")).unwrap());
}

#[test]
fn bad_configs_exit_with_code_two() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("bad.toml"), "frames = 0\n").unwrap();
    fs::write(d.path().join("typo.toml"), "snr_db = \"high\"\n").unwrap();
    for file in ["bad.toml", "typo.toml", "missing.toml"] {
        let out = advcomm(d.path(), &["sweep", "--config", file]);
        assert_eq!(out.status.code(), Some(2), "{file}");
        assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    }
}

#[test]
fn print_config_round_trips() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("small.toml"), SMALL).unwrap();
    let out = advcomm(d.path(), &["--print-config", "bounds", "--config", "small.toml", "--seed", "11"]);
    assert!(out.status.success());
    let cfg = ExperimentConfig::from_toml_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg.seed, 11);
    assert_eq!(cfg.frames, 2);
    assert_eq!(cfg.semantic.training.epochs, 10);
    assert!(!d.path().join("results.csv").exists());
}

#[test]
fn analyze_code_reports_every_variable_node() {
    let d = tempfile::tempdir().unwrap();
    let h = build_regular_ldpc(24, CodeRate::Half, 3, &mut RngStream::new(1, 0)).unwrap();
    fs::write(d.path().join("h.alist"), write_alist(&h)).unwrap();
    let out = advcomm(d.path(), &["analyze-code", "--alist", "h.alist"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 24, "{text}");

    fs::write(d.path().join("broken.alist"), "3 2\n").unwrap();
    let out = advcomm(d.path(), &["analyze-code", "--alist", "broken.alist"]);
    assert_eq!(out.status.code(), Some(1));
}
