use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pareto-witness")).args(args).env_remove("PARETO_WITNESS_THREADS").output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

const WARP_CSV: &str = "t,agent,alpha_1,alpha_2,beta_1,beta_2\n1,1,1,2,0,0.5\n2,1,2,1,0.5,0\n";

const SCENARIO: &str = r#"{
  "n_agents": 3, "horizon": 8, "n_dims": 2,
  "utilities": [{"kind": "product"}, {"kind": "sum"}, {"kind": "root_product"}],
  "mu": [0.3333333333333333, 0.3333333333333333, 0.3333333333333334],
  "seed": 11
}"#;

#[test]
fn warp_violation_reports_half() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "warp.csv", WARP_CSV);
    let out = run(&["test-efficiency", "--input", &input]);
    let v = stdout_json(&out);
    assert_eq!(v["rationalizable"], false);
    assert!((v["phi"].as_f64().unwrap() - 0.5).abs() <= 1e-6);
    assert!(String::from_utf8_lossy(&out.stderr).contains("not rationalizable, phi = 0.5"));
}

#[test]
fn simulate_then_test_is_rationalizable() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write(dir.path(), "scenario.json", SCENARIO);
    let data = dir.path().join("data.json");
    stdout_json(&run(&["simulate", "--scenario", &scenario, "--out", data.to_str().unwrap()]));
    let v = stdout_json(&run(&["test-efficiency", "--input", data.to_str().unwrap(), "--proximity"]));
    assert_eq!(v["rationalizable"], true);
    assert!(v["phi"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn detect_on_coordinating_data_keeps_null() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write(dir.path(), "scenario.json", SCENARIO);
    let data = dir.path().join("noisy.csv");
    stdout_json(&run(&["simulate", "--scenario", &scenario, "--out", data.to_str().unwrap(), "--noise", "0.05"]));
    let v = stdout_json(&run(&[
        "detect", "--input", data.to_str().unwrap(), "--sigma2", "0.05", "--gamma", "0.95", "--mc-samples", "500", "--seed", "3",
    ]));
    assert_eq!(v["decision"], "H0");
}

#[test]
fn reconstruct_and_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write(dir.path(), "scenario.json", SCENARIO);
    let data = dir.path().join("data.json");
    stdout_json(&run(&["simulate", "--scenario", &scenario, "--out", data.to_str().unwrap()]));
    let utils = dir.path().join("utils.json");
    let v = stdout_json(&run(&["reconstruct", "--input", data.to_str().unwrap(), "--out", utils.to_str().unwrap()]));
    assert_eq!(v["method"], "classical");
    let probe = write(dir.path(), "probe.json", "[0.5, 0.5]");
    let alloc = stdout_json(&run(&["predict", "--utils", utils.to_str().unwrap(), "--probe", &probe, "--mu", "0.2,0.3,0.5"]));
    let spend: f64 = alloc.as_array().unwrap().iter().flat_map(|b| b.as_array().unwrap()).map(|x| 0.5 * x.as_f64().unwrap()).sum();
    assert!(spend <= 1.0 + 1e-6);
    let csv_probe = write(dir.path(), "probe.csv", "alpha_1,alpha_2\n0.5,0.5\n");
    let frontier = stdout_json(&run(&["predict", "--utils", utils.to_str().unwrap(), "--probe", &csv_probe, "--frontier", "4"]));
    assert_eq!(frontier["points"].as_array().unwrap().len(), 15);
}

#[test]
fn robust_reconstruction_converges() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write(dir.path(), "scenario.json", &SCENARIO.replace("\"horizon\": 8", "\"horizon\": 4"));
    let data = dir.path().join("noisy.json");
    stdout_json(&run(&["simulate", "--scenario", &scenario, "--out", data.to_str().unwrap(), "--noise", "0.5"]));
    let utils = dir.path().join("robust.json");
    let v = stdout_json(&run(&["reconstruct", "--input", data.to_str().unwrap(), "--robust", "--out", utils.to_str().unwrap()]));
    assert_eq!(v["converged"], true);
    let parsed: Value = serde_json::from_str(&fs::read_to_string(utils).unwrap()).unwrap();
    assert_eq!(parsed.as_array().unwrap().len(), 3);
}

#[test]
fn experiment_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig4");
    let v = stdout_json(&run(&["experiment", "fig4", "--out", out.to_str().unwrap(), "--seed", "5", "--trials", "2", "--threads", "1"]));
    assert_eq!(v["experiment"], "fig4");
    let csv = fs::read_to_string(out.join("fig4.csv")).unwrap();
    assert!(csv.starts_with("sigma2,regime,mean_tail,std_tail"));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("fig4_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["config"]["trials"], 2);
    let again = dir.path().join("again");
    run(&["experiment", "fig4", "--out", again.to_str().unwrap(), "--seed", "5", "--trials", "2"]);
    assert_eq!(csv, fs::read_to_string(again.join("fig4.csv")).unwrap());
}

#[test]
fn uav_check_passes_on_double_integrator() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "model.json", r#"{"a": [[1.0, 0.5], [0.0, 1.0]], "c": [[1.0, 0.0], [0.0, 1.0]]}"#);
    let wave = write(dir.path(), "wave.json", r#"{"family": "triangular-cw", "c": 3e8, "omega_c": 6e9, "theta": 1e-3, "eta": 10.0}"#);
    let v = stdout_json(&run(&["uav-check", "--model", &model, "--pairs", "20", "--waveform", &wave]));
    assert_eq!(v["passed"], true);
    assert_eq!(v["report"]["checked"], 40);
    assert!(v["waveform_covariance"][0][0].as_f64().unwrap() > 0.0);
}

#[test]
fn bad_inputs_fail_with_field_names() {
    let out = run(&["detect", "--input", "x.csv", "--sigma2", "abc"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--sigma2"));
    let dir = tempfile::tempdir().unwrap();
    let scenario = write(dir.path(), "s.json", r#"{"n_agents": "three"}"#);
    let out = run(&["simulate", "--scenario", &scenario, "--out", "/dev/null"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_agents"));
}
