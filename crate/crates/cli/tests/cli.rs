//! The `glued` binary and the scenario runner, end to end.

use std::path::Path;
use std::process::{Command, Output};

use glued_cli::{exit_code, list_models, run_scenario, CliError, RunOptions, MANIFEST_NAME};
use glued_core::models::{bouncing_ball, BallParams, ModelEntry, Registry};
use serde_json::Value;
use sha2::{Digest, Sha256};

fn glued(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glued")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn read_manifest(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join(MANIFEST_NAME)).unwrap()).unwrap()
}

#[test]
fn certify_passes_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ripple");
    let o = glued(&["certify", "ripple", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("PASS ripple"));
    assert_eq!(read_manifest(&out)["pass"], true);
}

#[test]
fn manifest_hashes_match_the_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ball");
    let o = glued(&["certify", "bouncing_ball", "--out", out.to_str().unwrap(), "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let m = read_manifest(&out);
    assert_eq!(m["config"]["seed"], 3);
    let files = m["files"].as_array().unwrap();
    assert!(!files.is_empty());
    for f in files {
        let name = f["path"].as_str().unwrap();
        let bytes = std::fs::read(out.join(name)).unwrap();
        let hex: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(f["sha256"], hex.as_str(), "{name}");
        assert_eq!(f["bytes"], bytes.len() as u64);
    }
}

#[test]
fn failing_check_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("strict");
    let cfg = write_config(
        tmp.path(),
        "model_id = \"ripple\"\nmode = \"estimate\"\n[sim]\nhorizon = 4.0\n[checks]\nepsilon = 1e-12\n",
    );
    let o = glued(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.starts_with("FAIL"));
    assert!(stdout.contains("failed: windowed_error"));
    // Failing runs still leave their artifacts.
    assert_eq!(read_manifest(&out)["pass"], false);
}

#[test]
fn missing_model_id_is_a_config_error_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    let cfg = write_config(tmp.path(), "mode = \"certify\"\n");
    let o = glued(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model_id"));
    assert!(!out.exists());
}

#[test]
fn unknown_model_and_unknown_override_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    let o = glued(&["certify", "no_such_model", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = glued(&["certify", "bouncing_ball", "--override", "bogus=1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = glued(&["certify", "bouncing_ball", "--override", "rho", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn bad_parameter_value_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    let o = glued(&["certify", "bouncing_ball", "--override", "rho=-1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn list_prints_the_builtin_models() {
    let o = glued(&["list"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let ids: Vec<&str> = text.lines().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(ids, ["bouncing_ball", "reflected_di", "ripple"]);
}

#[test]
fn listing_follows_the_registry() {
    assert_eq!(list_models(&Registry::empty()), "");
    let mut reg = Registry::empty();
    reg.register(ModelEntry {
        id: "my_ball".into(),
        description: "test ball".into(),
        defaults: BallParams::default().to_map(),
        factory: std::sync::Arc::new(|_| bouncing_ball(BallParams::default())),
    });
    assert!(list_models(&reg).starts_with("my_ball\ttest ball\t"));
}

#[test]
fn sweep_runs_in_parallel_into_numbered_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let cfg = write_config(
        tmp.path(),
        "model_id = \"bouncing_ball\"\nmode = \"certify\"\n[[sweep]]\nrho = 1.0\n[[sweep]]\nrho = 2.0\n",
    );
    let opts = RunOptions {
        out_dir: Some(out.clone()),
        jobs: 2,
        ..RunOptions::default()
    };
    let result = run_scenario(&cfg, &Registry::builtin(), &opts);
    assert_eq!(exit_code(&result), 0);
    let runs = result.unwrap();
    assert_eq!(runs.len(), 2);
    for (i, rho) in [(0, 1.0), (1, 2.0)] {
        let m = read_manifest(&out.join(format!("run_{i:03}")));
        assert_eq!(m["config"]["overrides"]["rho"], rho);
        assert_eq!(m["config"]["sweep"], Value::Array(vec![]));
    }
}

#[test]
fn unreadable_config_is_a_config_error() {
    let err = run_scenario(Path::new("/nonexistent/scenario.toml"), &Registry::builtin(), &RunOptions::default());
    assert!(matches!(err, Err(CliError::Config(_))));
    assert_eq!(exit_code(&err), 2);
}
