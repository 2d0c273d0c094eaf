//! Black-box tests of the `dfdet` binary: flags, the dataset-root
//! environment override, config-digest guards and failure modes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = concat!(
    "seed = 11\n",
    "manifest = \"fixture/manifest.csv\"\n",
    "dataset_root = \"dataset\"\n",
    "run_dir = \"run\"\n\n",
    "[split]\ntest_fraction = 0.25\nval_fraction = 0.34\n\n",
    "[train]\nepochs = 2\nbatch_size = 8\nlearning_rate = 0.001\nseed = 11\n",
);

fn dfdet(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dfdet"));
    cmd.current_dir(dir).args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn dfdet")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = dfdet(dir, args, &[]);
    assert!(
        out.status.success(),
        "dfdet {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn setup_fixture(dir: &Path) {
    fs::write(dir.join("cfg.toml"), CONFIG).unwrap();
    ok(dir, &["--config", "cfg.toml", "--out", "fixture", "gen-fixture", "--videos", "4", "--frames", "4"]);
    ok(dir, &["--config", "cfg.toml", "split"]);
}

#[test]
fn env_var_overrides_dataset_root() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup_fixture(dir);

    let out = dfdet(
        dir,
        &["--config", "cfg.toml", "preprocess"],
        &[("DFDET_DATA_ROOT", "elsewhere")],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("elsewhere/index.csv").is_file());
    assert!(!dir.join("dataset").exists());

    // train honors the same override and finds the relocated dataset
    let out = dfdet(
        dir,
        &["--config", "cfg.toml", "train"],
        &[("DFDET_DATA_ROOT", "elsewhere")],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_rejects_dataset_built_under_different_config() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup_fixture(dir);
    ok(dir, &["--config", "cfg.toml", "preprocess"]);

    // a different seed changes the config digest, so the stamp must fail
    let out = dfdet(dir, &["--config", "cfg.toml", "--seed", "99", "train"], &[]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("dfdet: error:"), "stderr: {stderr}");
    assert!(stderr.contains("digest mismatch"), "stderr: {stderr}");
}

#[test]
fn missing_manifest_fails_with_machine_parseable_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("cfg.toml"), CONFIG).unwrap();

    let out = dfdet(dir, &["--config", "cfg.toml", "split"], &[]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("dfdet: error:"), "stderr: {stderr}");
}

#[test]
fn unknown_detector_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup_fixture(dir);
    fs::write(dir.join("bad.toml"), format!("detector = \"mystery\"\n{CONFIG}")).unwrap();

    let out = dfdet(dir, &["--config", "bad.toml", "preprocess", "--split", "run/split.json"], &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown detector"));
}

#[test]
fn seed_flag_changes_the_plan_and_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("cfg.toml"), CONFIG).unwrap();
    ok(dir, &["--config", "cfg.toml", "--out", "fixture", "gen-fixture", "--videos", "6", "--frames", "2"]);

    ok(dir, &["--config", "cfg.toml", "--out", "a", "split"]);
    ok(dir, &["--config", "cfg.toml", "--out", "b", "split"]);
    ok(dir, &["--config", "cfg.toml", "--seed", "99", "--out", "c", "split"]);

    let a = fs::read(dir.join("a/split.json")).unwrap();
    let b = fs::read(dir.join("b/split.json")).unwrap();
    let c = fs::read(dir.join("c/split.json")).unwrap();
    assert_eq!(a, b, "same seed must reproduce the plan byte for byte");
    assert_ne!(a, c, "different seed should shuffle differently");
}

#[test]
fn toml_config_parse_error_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("cfg.toml"), "seed = \"not a number\"\n").unwrap();

    let out = dfdet(dir, &["--config", "cfg.toml", "split"], &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("parse error"));
}
