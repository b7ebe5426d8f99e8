use std::path::Path;
use std::process::{Command, Output};

fn hydrofuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hydrofuse")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn energy_prints_estimate() {
    let out = hydrofuse(&["energy", "--p-high", "84", "--p-low", "84", "--w-high", "0.5", "--seconds", "240", "--tasks", "857"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["per_task_kwh"].as_f64().unwrap() - 0.0056).abs() < 1e-12);
    assert!((v["cumulative_kwh"].as_f64().unwrap() - 4.7992).abs() < 1e-9);
}

#[test]
fn energy_rejects_nonpositive_duration() {
    let out = hydrofuse(&["energy", "--p-high", "130", "--p-low", "60", "--w-high", "0.33", "--seconds", "0", "--tasks", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("task_seconds"));
}

#[test]
fn synth_run_verify_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("spec.toml");
    std::fs::write(&spec, "n_steps = 3000\nnoise_std = 0.05\nrng_seed = 10\n").unwrap();
    let data = tmp.path().join("data");
    assert!(hydrofuse(&["synth", "--spec", p(&spec), "--out", p(&data), "--count", "2"]).status.success());
    let manifest = std::fs::read_to_string(data.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 3);
    assert!(manifest.contains("synth010,synth010_rain.csv,synth010_q.csv"));

    let cfg = tmp.path().join("config.toml");
    std::fs::write(&cfg, "n_rounds = 50\nrf_n_trees = 40\npeak_quantile = 0.99\n").unwrap();
    let out = tmp.path().join("out");
    let run = hydrofuse(&[
        "run", "--manifest", p(&data.join("manifest.csv")), "--config", p(&cfg), "--out", p(&out),
        "--workers", "2", "--seed", "5", "--pilot", "synth011", "--dump-features", p(&tmp.path().join("features")),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(out.join("synth011/forecast.csv").exists());
    assert!(!out.join("synth010").exists());
    assert!(tmp.path().join("features/synth011_train_features.csv").exists());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("synth011/report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["rng_seed"], 5);
    assert!(report["overrides"].as_array().unwrap().iter().any(|o| o == "rng_seed"));

    let verified = tmp.path().join("verify.json");
    let v = hydrofuse(&[
        "verify", "--forecast", p(&out.join("synth011/forecast.csv")), "--out", p(&verified),
        "--threshold", &report["threshold"].to_string(),
    ]);
    assert!(v.status.success());
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&verified).unwrap()).unwrap();
    assert_eq!(doc["fused"]["contingency"], report["fused"]["contingency"]);
    assert_eq!(doc["fused"]["kge"], report["fused"]["kge"]);
}

#[test]
fn failed_task_sets_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tmp.path().join("m.csv");
    std::fs::write(&manifest, "catchment_id,rain_path,q_path\nghost,ghost_rain.csv,ghost_q.csv\n").unwrap();
    let out = hydrofuse(&["run", "--manifest", p(&manifest), "--out", p(&tmp.path().join("out"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("failed"));
}

#[test]
fn unknown_config_key_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "learning_rat = 0.1\n").unwrap();
    let manifest = tmp.path().join("m.csv");
    std::fs::write(&manifest, "catchment_id,rain_path,q_path\na,r.csv,q.csv\n").unwrap();
    let out = hydrofuse(&["run", "--manifest", p(&manifest), "--config", p(&cfg), "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rat"));
}
