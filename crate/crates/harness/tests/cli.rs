use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::json;

fn cefl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cefl"))
}

fn write_config(dir: &Path, value: serde_json::Value) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, value.to_string()).unwrap();
    path
}

fn small() -> serde_json::Value {
    json!({
        "instance": { "source": "generate", "kind": "regression_sin", "n": 10, "d": 3, "l": 4 },
        "byzantine": { "count": 2 },
        "rounds": 12,
        "noise": { "sigma": 0.2 },
        "seed": 4,
    })
}

#[test]
fn run_writes_trace_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), small());
    let out = dir.path().join("out");
    let status = cefl().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let csv = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 13);
    assert!(out.join("trace.json").exists());

    // the written config regenerates the same trace
    let again = dir.path().join("again");
    let s = cefl().args(["run", "--config"]).arg(out.join("config.json")).arg("--out").arg(&again).output().unwrap();
    assert!(s.status.success());
    assert_eq!(fs::read(again.join("trace.csv")).unwrap(), csv.as_bytes());

    let summary = cefl().args(["summarize", "--trace"]).arg(out.join("trace.csv")).output().unwrap();
    assert!(summary.status.success());
    let stats: serde_json::Value = serde_json::from_slice(&summary.stdout).unwrap();
    assert_eq!(stats["rounds"], 12);
    assert_eq!(stats["metric"], "optimality_gap");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let mut bad = small();
    bad["byzantine"] = json!({ "count": 6 });
    let cfg = write_config(dir.path(), bad);
    let s = cefl().args(["run", "--config"]).arg(&cfg).args(["--out", "/tmp/unused"]).output().unwrap();
    assert_eq!(s.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&s.stderr).contains("byzantine/filter_f"));

    let mut diverge = small();
    diverge["schedule"] = json!({ "type": "constant", "alpha": 1e150 });
    diverge["rule"] = json!({ "type": "mean" });
    let cfg = write_config(dir.path(), diverge);
    let s = cefl().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("d")).output().unwrap();
    assert_eq!(s.status.code(), Some(2), "{}", String::from_utf8_lossy(&s.stderr));
    assert!(dir.path().join("d/trace.csv").exists());

    let s = cefl().args(["run", "--config", "/nonexistent.json", "--out", "/tmp/x"]).output().unwrap();
    assert_eq!(s.status.code(), Some(3));

    let cfg = write_config(dir.path(), small());
    fs::write(dir.path().join("blocker"), "").unwrap();
    let s = cefl().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("blocker/sub")).output().unwrap();
    assert_eq!(s.status.code(), Some(3));
}

#[test]
fn check_prints_advisory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), small());
    let s = cefl().args(["check", "--config"]).arg(&cfg).output().unwrap();
    assert!(s.status.success());
    let v: serde_json::Value = serde_json::from_slice(&s.stdout).unwrap();
    assert!(v["L_hat"].as_f64().unwrap() >= v["mu_hat"].as_f64().unwrap());
    assert!(v["conditions"]["alpha_max"].as_f64().unwrap() > 0.0);
    assert!(v["conditions"]["fraction_ok"].is_boolean());
}

#[test]
fn sweep_over_rules() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), small());
    let out = dir.path().join("sweep");
    let s = cefl()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .args(["--axis", "rule=ce,cwtm,mean", "--reps", "2", "--out"])
        .arg(&out)
        .env("CEFL_WORKERS", "2")
        .output()
        .unwrap();
    assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
    for rule in ["ce", "cwtm", "mean"] {
        for rep in 0..2 {
            assert!(out.join(format!("rule={rule}/rep{rep}/trace.csv")).exists());
        }
    }
    let sweep: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(sweep["cells"].as_array().unwrap().len(), 6);

    let s = cefl().args(["sweep", "--config"]).arg(&cfg).args(["--axis", "byzantine_f=1,5", "--out"]).arg(&out).output().unwrap();
    assert_eq!(s.status.code(), Some(1), "f = 5 breaks N/2 − 1 for N = 10");
    let s = cefl().args(["sweep", "--config"]).arg(&cfg).args(["--axis", "colour=1", "--out"]).arg(&out).output().unwrap();
    assert!(!s.status.success());
}

#[test]
fn preset_fig3_uses_gradient_metric() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig3");
    let s = cefl().args(["preset", "fig3", "--seed", "1", "--out"]).arg(&out).output().unwrap();
    assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["metric"], "mean_sq_grad");
    assert_eq!(summary["cells"].as_array().unwrap().len(), 8);
    assert!(out.join("plot.py").exists());
    let cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("ce_T1_f2/config.json")).unwrap()).unwrap();
    assert_eq!(cfg["instance"]["kind"], "sigmoid_norm");
    assert_eq!(cfg["local_steps"], 1);

    let s = cefl().args(["preset", "fig3", "--alpha", "theory", "--out"]).arg(dir.path().join("x")).output().unwrap();
    assert_eq!(s.status.code(), Some(1));
    let s = cefl().args(["preset", "fig4", "--out"]).arg(dir.path().join("y")).output().unwrap();
    assert!(!s.status.success());
}
