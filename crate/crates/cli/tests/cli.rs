use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_distsat");

fn distsat(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("DISTSAT_WORKERS").output().expect("spawn distsat")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const SMALL: &str = "power_cap_dbw_grid = [0.0, 20.0]\nmc_trials = 50\n";

#[test]
fn validate_accepts_partial_file_and_dumps_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ok.toml", "L = 3\n");
    let out = distsat(&["validate", "--config", &cfg]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("OK\n"));
    let dump: serde_json::Value = serde_json::from_str(&text[3..]).unwrap();
    assert_eq!(dump["num_sats"], 3);
    assert_eq!(dump["sat_antennas"], 64);
}

#[test]
fn validate_names_the_violated_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "user_antennas = 2\nstreams = 3\n");
    let out = distsat(&["validate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("streams"), "{err}");
}

#[test]
fn missing_config_exits_with_one() {
    let out = distsat(&["validate", "--config", "/nonexistent/scenario.toml"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_preset_is_a_usage_error() {
    let out = distsat(&["run", "--preset", "no-such-figure"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("approx-gap"));
}

#[test]
fn bad_worker_count_is_a_usage_error() {
    let out = Command::new(BIN).args(["run", "--preset", "approx-gap"]).env("DISTSAT_WORKERS", "zero").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rerun_is_byte_identical_and_writes_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let mut outputs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let csv = dir.path().join(name);
        let out = distsat(&["run", "--preset", "baselines", "--config", &cfg, "--out", csv.to_str().unwrap(), "--quiet"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(fs::read(&csv).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);

    let text = String::from_utf8(outputs[0].clone()).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# "));
    assert_eq!(
        lines.next().unwrap(),
        "scenario_id,mode,L,K,N,M,S,power_cap_dbw,sum_se,per_user_se,iterations,wall_time_ms,seed"
    );
    // 2 scenarios × 2 points × 3 schemes × 2 estimates.
    assert_eq!(lines.count(), 24);

    let sidecar: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("a.json")).unwrap()).unwrap();
    assert_eq!(sidecar["preset"], "baselines");
    assert_eq!(sidecar["rows"], 24);
    assert_eq!(sidecar["trials"], 50);
}

#[test]
fn seed_flag_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let run = |seed: &str| distsat(&["run", "--preset", "joint-vs-streamwise-nonorthogonal", "--config", &cfg, "--seed", seed]).stdout;
    assert_ne!(run("1"), run("2"));
}

#[test]
fn orthogonal_preset_streamwise_tracks_joint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = distsat(&["run", "--preset", "joint-vs-streamwise-orthogonal", "--config", &cfg]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let approx = |mode: &str| -> Vec<f64> {
        text.lines()
            .skip(2)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .filter(|f| f[1] == mode)
            .map(|f| f[8].parse().unwrap())
            .collect()
    };
    let (joint, sw) = (approx("joint:approx"), approx("streamwise:approx"));
    assert_eq!(joint.len(), 2);
    for (j, s) in joint.iter().zip(&sw) {
        assert!(s / j >= 0.95, "{s} vs {j}");
    }
}
