use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_freqmarket"))
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

/// Scenario A with textual substitutions applied, written into `dir`.
fn variant(dir: &Path, edits: &[(&str, &str)]) -> PathBuf {
    let mut text = std::fs::read_to_string(shipped("scenario_a.toml")).unwrap();
    for (from, to) in edits {
        assert!(text.contains(from), "`{from}` not in config");
        text = text.replacen(from, to, 1);
    }
    let path = dir.join("variant.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn diagnostic(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().unwrap_or_else(|| panic!("no stderr"));
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not JSON ({e}): {line}"))
}

#[test]
fn run_writes_three_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", shipped("scenario_a.toml").to_str().unwrap(), "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trajectory.csv", "summary.json", "manifest.json"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let csv = |sub: &str| {
        let target = dir.path().join(sub);
        let out = bin()
            .args(["run", shipped("scenario_b.toml").to_str().unwrap(), "--seed", "3", "--out"])
            .arg(&target)
            .output()
            .unwrap();
        assert!(out.status.success());
        std::fs::read(target.join("trajectory.csv")).unwrap()
    };
    assert_eq!(csv("a"), csv("b"));
}

#[test]
fn invalid_config_lists_every_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = variant(
        dir.path(),
        &[("inertia = 12.0", "inertia = -1.0"), ("quad_cost = 0.01\n", "quad_cost = 0.0\n"), ("dt_sample = 0.25", "dt_sample = 0.07")],
    );
    let out = bin().arg("run").arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let diag = diagnostic(&out);
    assert_eq!(diag["kind"], "config_invalid");
    let fields: Vec<&str> = diag["errors"].as_array().unwrap().iter().map(|e| e["field"].as_str().unwrap()).collect();
    for f in ["grid.inertia", "generator[1].quad_cost", "simulation.dt_sample"] {
        assert!(fields.contains(&f), "{f} not reported in {fields:?}");
    }
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = variant(dir.path(), &[("f_nominal = 60.0", "f_nominal = 60.0\nfrequency = 50.0")]);
    let out = bin().arg("run").arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unstable_step_exits_diverged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = variant(
        dir.path(),
        &[("dt_physics = 0.05", "dt_physics = 1.0"), ("dt_sample = 0.25", "dt_sample = 1.0"), ("horizon = 600.0", "horizon = 3000.0")],
    );
    let out = bin().arg("run").arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(diagnostic(&out)["kind"], "diverged");
}

#[test]
fn excess_demand_exits_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = variant(dir.path(), &[("demand = 200.0", "demand = 400.0")]);
    let out = bin().arg("run").arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
    let diag = diagnostic(&out);
    assert_eq!(diag["kind"], "infeasible");
    assert_eq!(diag["demand"]["shortfall"], 150.0);
}

#[test]
fn missing_file_is_a_generic_failure() {
    let out = bin().args(["run", "/nonexistent/config.toml"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(diagnostic(&out)["message"].as_str().unwrap().contains("/nonexistent/config.toml"));
}

#[test]
fn sweep_writes_one_directory_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["sweep", shipped("scenario_b.toml").to_str().unwrap(), "--seeds", "2", "--param", "simulation.horizon=60,120", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("sweep.json")).unwrap()).unwrap();
    assert_eq!(report["aggregate"]["runs"], 4);
    assert_eq!(report["aggregate"]["failed"], 0);
    for label in ["run_000_seed_1", "run_003_seed_2"] {
        assert!(dir.path().join(label).join("manifest.json").is_file());
    }
}

#[test]
fn sweep_rejects_unknown_parameter() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["sweep", shipped("scenario_a.toml").to_str().unwrap(), "--param", "grid.colour=1", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn schedule_export_round_trips() {
    let out = bin().args(["schedule", shipped("scenario_a.toml").to_str().unwrap()]).output().unwrap();
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["events"][0]["kind"], "step");
    assert_eq!(doc["events"][1]["generator"], 5);
}

#[test]
fn fast_verify_prints_one_line_per_check() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("verify.json");
    let out = bin().args(["verify", "--level", "fast", "--json"]).arg(&json).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().count(), 4, "{stdout}");
    assert!(stdout.lines().all(|l| l.starts_with("[PASS]") || l.starts_with("[FAIL]")));
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(json).unwrap()).unwrap();
    assert_eq!(report["level"], "fast");
}
