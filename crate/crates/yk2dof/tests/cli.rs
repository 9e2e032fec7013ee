//! End-to-end checks of the command-line surface: artifacts, schemas and
//! exit codes.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_yk2dof"))
}

fn tmpdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("yk2dof-test-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Fast configuration: short horizonless scenario, small FIR fit.
fn quick_config(dir: &std::path::Path) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{
            "qdesign": {"Nq": 10, "L": 150},
            "scenario": {
                "mode": "ffmpc_constrained",
                "duration": 20,
                "events": [
                    {"time": 3, "channel": 0, "kind": "reference", "magnitude": 1.0},
                    {"time": 12, "channel": 0, "kind": "disturbance", "magnitude": 0.5}
                ],
                "u_limit": 10.0
            }
        }"#,
    )
    .unwrap();
    path
}

#[test]
fn simulate_writes_csv_and_metrics() {
    let dir = tmpdir("sim");
    let cfg = quick_config(&dir);
    let out = dir.join("runs");
    let status = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("ffmpc_constrained.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,y1,y2,r1,r2,u1,u2,d1,d2,h1,h2,h3,h4,mode"
    );
    assert_eq!(csv.lines().count(), 22); // header + duration + 1 rows
    let metrics: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("ffmpc_constrained.metrics.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(metrics["mode"], "ffmpc_constrained");
    assert_eq!(metrics["metrics"]["violation_count"], 0);
}

#[test]
fn simulate_is_bit_deterministic_across_processes() {
    let dir = tmpdir("det");
    let cfg = quick_config(&dir);
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.join(format!("run{run}"));
        let status = bin()
            .args(["simulate", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(std::fs::read(out.join("ffmpc_constrained.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn report_merges_metrics() {
    let dir = tmpdir("report");
    let cfg = quick_config(&dir);
    let out = dir.join("runs");
    let status = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--mode", "standard_mpc"])
        .status()
        .unwrap();
    assert!(status.success());
    let report = dir.join("report.json");
    let status = bin()
        .args(["report", "--in"])
        .arg(&out)
        .arg("--out")
        .arg(&report)
        .status()
        .unwrap();
    assert!(status.success());
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(doc["runs"].as_array().unwrap().len(), 1);
    assert_eq!(doc["runs"][0]["mode"], "standard_mpc");
}

#[test]
fn qsynth_emits_taps_and_realization() {
    let dir = tmpdir("qsynth");
    let cfg = quick_config(&dir);
    let out = dir.join("q.json");
    let status = bin()
        .args(["qsynth", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["taps"].as_array().unwrap().len(), 10);
    assert!(doc["realized"]["A"].is_array());
    assert!(doc["realized"]["Ts"].as_f64().unwrap() > 0.0);
}

#[test]
fn bezout_check_passes_on_defaults() {
    let dir = tmpdir("bezout");
    let cfg = quick_config(&dir);
    let out = dir.join("factors.json");
    let output = bin()
        .args(["bezout-check", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success());
    let line: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(line["ok"], true);
    assert!(line["residual"].as_f64().unwrap() <= 1e-7);
    let factors: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    for key in ["M", "N", "U", "V", "Mt", "Nt", "Ut", "Vt"] {
        assert!(factors[key]["A"].is_array(), "{key} missing");
    }
}

#[test]
fn gains_prints_json() {
    let dir = tmpdir("gains");
    let cfg = quick_config(&dir);
    let output = bin()
        .args(["gains", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(output.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(doc["Lx"].as_array().unwrap().len(), 2);
    assert_eq!(doc["Kff"].as_array().unwrap().len(), 2);
}

#[test]
fn config_errors_exit_with_code_4() {
    let dir = tmpdir("badcfg");
    let bad = dir.join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let status = bin()
        .args(["simulate", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(4));

    // structurally valid JSON with an impossible scenario
    let bad2 = dir.join("bad2.json");
    std::fs::write(
        &bad2,
        r#"{"scenario": {"duration": 5, "events": [{"time": 50, "channel": 0, "kind": "reference", "magnitude": 1.0}]}}"#,
    )
    .unwrap();
    let status = bin()
        .args(["simulate", "--config"])
        .arg(&bad2)
        .arg("--out")
        .arg(dir.join("out2"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(4));
}
