use std::path::Path;
use std::process::{Command, Output};

use resonator_q::clamping_loss::compute_d;
use resonator_q::cli::config::{ClampingConfig, SolverConfig, SweepSpec};
use resonator_q::cli::sweep::{evaluate_geometry, run_sweep};

fn run(dir: &Path, args: &[&str], config: &str) -> Output {
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_resonator-q")).args(args).arg("--config").arg(&cfg).arg("--out").arg(dir.join("out")).output().unwrap()
}

fn error_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|_| panic!("stderr is not JSON: {}", String::from_utf8_lossy(&out.stderr)))
}

#[test]
fn validate_only_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["budget", "--validate-only"], r#"{"budget": {"power_w": 1e-5}}"#);
    assert!(out.status.success());
    assert!(!dir.path().join("out").exists());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["valid"], true);
}

#[test]
fn unknown_key_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["budget"], r#"{"budget": {"power": 1e-5}}"#);
    assert_eq!(out.status.code(), Some(2));
    let e = error_json(&out);
    assert_eq!(e["exit_code"], 2);
    assert_eq!(e["command"], "budget");
    assert_eq!(e["error"]["key"], "budget.power");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn malformed_json_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["gas-fit"], r#"{"gas_fit": "#);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_csv_is_rejected_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.csv"), "").unwrap();
    for (cmd, block) in
        [("gas-fit", "gas_fit"), ("intrinsic-fit", "intrinsic_fit"), ("fit-crossing", "fit_crossing"), ("spectrum-fit", "spectrum_fit")]
    {
        let out = run(dir.path(), &[cmd], &format!(r#"{{"{block}": {{"input": "empty.csv"}}}}"#));
        assert_eq!(out.status.code(), Some(2), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(error_json(&out)["error"]["key"], format!("{block}.input"));
        assert!(!dir.path().join("out").exists(), "{cmd} wrote outputs");
    }
}

#[test]
fn missing_input_is_keyed() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["gas-fit"], "{}");
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["key"], "gas_fit.input");
}

#[test]
fn decreasing_calibration_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("dq.csv"), "d,q\n100,9000\n1000,3000\n10000,1000\n").unwrap();
    let out = run(dir.path(), &["clamping"], r#"{"clamping": {"calibration": {"input": "dq.csv", "model": "saturation"}}}"#);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn report_lists_outputs_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["budget", "--seed", "9"], r#"{"budget": {"sweep": "temperature_k", "values": [0.3, 1.0, 4.0]}}"#);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 9);
    assert_eq!(report["outputs"], serde_json::json!(["budget.csv", "report.json"]));
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
    let csv = std::fs::read_to_string(dir.path().join("out/budget.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    // no staging files left behind
    assert!(std::fs::read_dir(dir.path().join("out")).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".partial")));
}

#[test]
fn single_point_sweep_matches_direct_evaluation() {
    let cfg = ClampingConfig {
        sweep: Some(SweepSpec { values: Some(vec![0.6]), ..Default::default() }),
        refinement: 1,
        solver: SolverConfig { dense_threshold: 0, ..Default::default() },
        ..Default::default()
    };
    let sweep = run_sweep(&cfg, &[0.6], 4).unwrap();
    let (dofs, modes, est) = evaluate_geometry(&cfg, &cfg.geometry.with_undercut(0.6), cfg.target_hz, 4).unwrap();
    let p = &sweep.points[0];
    assert_eq!(p.dofs, dofs);
    assert_eq!(p.modes.len(), modes.len());
    for ((r, m), e) in p.modes.iter().zip(&modes).zip(&est) {
        assert_eq!(r.frequency_hz, m.frequency_hz());
        assert_eq!(r.d, e.d_value);
        assert_eq!(r.d, compute_d(m, &cfg.materials.silica).unwrap().d_value);
    }
    assert!(sweep.regions.iter().all(|r| !r.is_dip));
}
