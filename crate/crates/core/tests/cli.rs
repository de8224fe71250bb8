mod common;

use std::process::Command;

use common::data_dir;

fn sefdi(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_sefdi")).args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8(out.stdout).unwrap(), String::from_utf8(out.stderr).unwrap())
}

fn case() -> String {
    data_dir().join("three_bus.json").display().to_string()
}

fn scenario(n: usize) -> String {
    data_dir().join("scenarios").join(format!("scenario{n}.json")).display().to_string()
}

#[test]
fn estimate_prints_three_bus_state() {
    let (code, out, _) = sefdi(&["estimate", "--case", &case()]);
    assert_eq!(code, 0);
    assert!(out.contains("angles: 0.0285714 -0.0942857 0"), "{out}");
    assert!(out.contains("squared_error: 0.000214286"), "{out}");
}

#[test]
fn attack_prints_vector_and_corrupted_readings() {
    let (code, out, _) = sefdi(&["attack", "--case", &case(), "--shift", "0.005,0.001"]);
    assert_eq!(code, 0);
    assert!(out.contains("a: 0.02 0.0125 -0.004"), "{out}");
    assert!(out.contains("z_a: 0.64 0.0725 0.366"), "{out}");
}

#[test]
fn detect_flags_gross_error() {
    let (code, out, _) = sefdi(&["detect", "--case", &case(), "--z", "0.63,0.05,0.35"]);
    assert_eq!(code, 0);
    assert!(out.contains("verdict: Detected"), "{out}");
    let (_, out, _) = sefdi(&["detect", "--case", &case(), "--z", "0.62,0.06,0.37", "--method", "lnr"]);
    assert!(out.contains("verdict: Not Detected") && out.contains("statistic: 1.46385"), "{out}");
}

#[test]
fn scenario_table_and_machine_output() {
    let files: Vec<String> = (1..=4).map(scenario).collect();
    let mut args = vec!["scenario", "run"];
    args.extend(files.iter().map(String::as_str));
    let (code, out, _) = sefdi(&args);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("Case") && lines[0].contains("Squared Error"));
    assert!(lines[2].contains("Detected") && !lines[2].contains("Not Detected"));

    args.extend(["--format", "machine"]);
    let (_, first, _) = sefdi(&args);
    let (_, second, _) = sefdi(&args);
    assert_eq!(first, second);
    assert_eq!(first.lines().count(), 4);
    for line in first.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["verdicts"].is_array());
    }
}

#[test]
fn montecarlo_reports_rates() {
    let (code, out, _) = sefdi(&[
        "montecarlo",
        "--case",
        &case(),
        "--trials",
        "200",
        "--attack",
        "stealth",
        "--magnitude",
        "0.01",
        "--seed",
        "5",
        "--format",
        "machine",
    ]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["trials"], 200);
    assert_eq!(v["detection_rate"], v["false_alarm_rate"]);
}

#[test]
fn exit_codes_by_error_class() {
    assert_eq!(sefdi(&["estimate", "--case", "/nonexistent/case.json"]).0, 2);
    assert_eq!(sefdi(&["detect", "--case", &case(), "--z", "1,2"]).0, 2);
    assert_eq!(sefdi(&["estimate"]).0, 2);
    // three meters cannot observe the five AC states
    let (code, _, err) = sefdi(&["estimate", "--case", &case(), "--mode", "ac"]);
    assert_eq!(code, 3, "{err}");
    assert_eq!(sefdi(&["--help"]).0, 0);
}

#[test]
fn non_convergence_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("two_bus.json");
    std::fs::write(
        &path,
        r#"{
            "buses": [{"id": 1, "ref": true}, {"id": 2}],
            "branches": [{"from": 1, "to": 2, "r": 0.01, "x": 0.1}],
            "measurements": [
                {"kind": "flow_p", "from": 1, "to": 2, "sigma": 0.01, "value": 0.5},
                {"kind": "flow_q", "from": 1, "to": 2, "sigma": 0.01, "value": 0.2},
                {"kind": "voltage_magnitude", "bus": 1, "sigma": 0.01, "value": 1.02},
                {"kind": "injection_p", "bus": 2, "sigma": 0.01, "value": -0.49}
            ]
        }"#,
    )
    .unwrap();
    let path = path.to_str().unwrap();
    let (code, _, err) = sefdi(&["estimate", "--case", path, "--mode", "ac", "--max-iter", "1"]);
    assert_eq!(code, 4, "{err}");
    let (code, out, err) = sefdi(&["estimate", "--case", path, "--mode", "ac"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("magnitudes:"), "{out}");
}
