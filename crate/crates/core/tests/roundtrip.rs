mod common;

use common::{data_dir, random_dc_case, rng};
use sefdi::grid;
use sefdi::harness::{self, Report, ReportFormat, Scenario, ScenarioReport};

#[test]
fn case_file_round_trip() {
    let case = grid::load_case(&data_dir().join("three_bus.json")).unwrap();
    assert_eq!(grid::parse_case(&case.to_json()).unwrap(), case);
    let mut r = rng(1);
    for _ in 0..20 {
        let case = random_dc_case(&mut r, 8);
        assert_eq!(grid::parse_case(&case.to_json()).unwrap(), case);
    }
}

#[test]
fn machine_report_reparses_and_reemits_identically() {
    for n in 1..=4 {
        let scenario = Scenario::load(&data_dir().join("scenarios").join(format!("scenario{n}.json"))).unwrap();
        let report = harness::run_scenario(&scenario).unwrap();
        let text = harness::emit_report(Report::Scenarios(std::slice::from_ref(&report)), ReportFormat::Machine);
        let parsed: ScenarioReport = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, report.rounded());
        let again = harness::emit_report(Report::Scenarios(std::slice::from_ref(&parsed)), ReportFormat::Machine);
        assert_eq!(again, text);
    }
}

#[test]
fn scenario_case_path_resolves_against_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(data_dir().join("three_bus.json"), dir.path().join("grid.json")).unwrap();
    let path = dir.path().join("s.json");
    std::fs::write(
        &path,
        r#"{"name": "sim", "case": "grid.json",
            "measurements": {"simulate": {"state": [0.02, -0.05], "seed": 9}},
            "attack": {"kind": "random_stealth", "magnitude": 0.01, "seed": 2},
            "detectors": [{"method": "norm_threshold", "tau": 1.0}]}"#,
    )
    .unwrap();
    let report = harness::run_scenario(&Scenario::load(&path).unwrap()).unwrap();
    assert!(report.attacked && !report.detected());
    assert_eq!(report.verdicts[0].method, "norm_threshold");
}

#[test]
fn unknown_scenario_keys_are_rejected() {
    let err = Scenario::parse(r#"{"name": "x", "case": "c.json", "colour": "red"}"#).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}
