use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn run(sub: &str, config: &str, dir: &Path, extra: &[&str]) -> (i32, String) {
    let cfg = dir.join(format!("{sub}.conf"));
    fs::write(&cfg, config).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_rds-dichotomy"))
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join("out").join(name)).unwrap()
}

#[test]
fn ou_check_default_and_zero_path() {
    let dir = tempfile::tempdir().unwrap();
    let (code, msg) = run("ou-check", "", dir.path(), &[]);
    assert_eq!(code, 0, "{msg}");
    let csv = read(dir.path(), "ou_check.csv");
    assert!(!csv.contains('\r'));
    let var: f64 = csv
        .lines()
        .find(|l| l.starts_with("variance,"))
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!((var - 0.5).abs() < 0.05, "{var}");

    let (code, msg) = run("ou-check", "injected_path = zero\n", dir.path(), &[]);
    assert_eq!(code, 0, "{msg}");
    for line in read(dir.path(), "ou_check.csv").lines().skip(1) {
        assert_eq!(line.split(',').nth(1), Some("0e0"), "{line}");
    }
}

#[test]
fn malformed_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, msg) = run("ou-check", "seed = 3\nh = fast\n", dir.path(), &[]);
    assert_eq!(code, 2);
    assert!(msg.contains("line 2") && msg.contains("`h`"), "{msg}");
    let (code, msg) = run("hyperbolic", "eta_grid = 0.1,0.2\n", dir.path(), &[]);
    assert_eq!(code, 2);
    assert!(msg.contains("eta_grid"), "{msg}");
    let (code, _) = run("wave", "command = robustness\n", dir.path(), &[]);
    assert_eq!(code, 2);
    let status = Command::new(env!("CARGO_BIN_EXE_rds-dichotomy")).arg("wave").status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn robustness_exit_codes_and_collapse() {
    let dir = tempfile::tempdir().unwrap();
    let (code, msg) = run("robustness", "", dir.path(), &[]);
    assert_eq!(code, 0, "{msg}");
    let report: Value = serde_json::from_str(&read(dir.path(), "robustness.json")).unwrap();
    let scalar = &report["instances"][0];
    let alpha_tilde = scalar["constants"]["alpha_tilde"].as_f64().unwrap();
    assert!(alpha_tilde <= -(0.55f64.ln()) + 1e-9);

    let (code, msg) = run("robustness", "scalar_perturbed = 0.9\n", dir.path(), &[]);
    assert_eq!(code, 1, "{msg}");
    assert!(msg.contains("threshold"), "{msg}");
    let report: Value = serde_json::from_str(&read(dir.path(), "robustness.json")).unwrap();
    assert!(report["instances"][0]["error"].as_str().unwrap().contains("threshold"));

    let (code, msg) = run("robustness", "scalar_perturbed = 0.5\nsaddle_eps = 0\n", dir.path(), &[]);
    assert_eq!(code, 0, "{msg}");
    let report: Value = serde_json::from_str(&read(dir.path(), "robustness.json")).unwrap();
    for inst in report["instances"].as_array().unwrap() {
        let c = &inst["constants"];
        assert_eq!(c["m"], inst["base_bound"]);
        assert_eq!(c["alpha_tilde"], inst["base_exponent"]);
        assert_eq!(c["beta_tilde"], inst["base_exponent"]);
        assert_eq!(c["rho"].as_f64(), Some(0.0));
    }
}

#[test]
fn json_keys_keep_their_order() {
    let dir = tempfile::tempdir().unwrap();
    run("robustness", "", dir.path(), &[]);
    let text = read(dir.path(), "robustness.json");
    let pos = |k: &str| text.find(&format!("\"{k}\"")).unwrap();
    assert!(pos("command") < pos("seed") && pos("seed") < pos("passed") && pos("passed") < pos("instances"));
}

#[test]
fn hyperbolic_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = "model = cubic\neta_grid = 0.1,0.05,0\nt_min = -3\nt_max = 3\n";
    let (code, msg) = run("hyperbolic", config, dir.path(), &["--seed", "7"]);
    assert_eq!(code, 0, "{msg}");
    let first = (read(dir.path(), "hyperbolic.csv"), read(dir.path(), "hyperbolic.json"));
    let (code, _) = run("hyperbolic", config, dir.path(), &["--seed", "7"]);
    assert_eq!(code, 0);
    assert_eq!(first, (read(dir.path(), "hyperbolic.csv"), read(dir.path(), "hyperbolic.json")));
    let report: Value = serde_json::from_str(&first.1).unwrap();
    assert_eq!(report["seed"].as_u64(), Some(7));
    let zero = report["rows"].as_array().unwrap().iter().find(|r| r["eta"] == 0.0).unwrap();
    assert_eq!(zero["status"], "Certified");
    assert_eq!(zero["sup_distance"].as_f64(), Some(0.0));
}

#[test]
fn wave_resonance_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let pi2 = std::f64::consts::PI.powi(2);
    let (code, msg) = run("wave", &format!("f_linear = {pi2:?}\n"), dir.path(), &[]);
    assert_eq!(code, 1);
    assert!(msg.contains("non-hyperbolic"), "{msg}");
}

#[test]
fn small_wave_run() {
    let dir = tempfile::tempdir().unwrap();
    let (code, msg) = run("wave", "n_modes = 1\neta_grid = 0.02,0\n", dir.path(), &[]);
    assert_eq!(code, 0, "{msg}");
    let csv = read(dir.path(), "wave.csv");
    assert!(csv.starts_with("eta,sup_dist_v,sup_dist_y,certified,alpha_tilde,M_bound,seed\n"), "{csv}");
    assert_eq!(csv.lines().count(), 3);
}
