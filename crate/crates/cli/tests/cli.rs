use std::path::Path;
use std::process::{Command, Output};

fn nepspace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nepspace")).args(args).output().expect("spawn nepspace")
}

fn generate_delay(dir: &Path) -> String {
    let out = nepspace(&[
        "generate", "--kind", "delay", "--n", "12", "--density", "0.2", "--seed", "7", "--target", "0.2,0",
        "--out", dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = String::from_utf8(out.stdout).unwrap();
    cfg.trim().to_string()
}

#[test]
fn generate_then_solve_converges() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = generate_delay(dir.path());
    let out_dir = dir.path().join("run");
    let out = nepspace(&["solve", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("result.json").is_file());
    assert!(out_dir.join("iterations.csv").is_file());
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("result.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "converged");
}

#[test]
fn invalid_config_exits_one_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = generate_delay(dir.path());
    let mut doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&cfg).unwrap()).unwrap();
    doc["tol"] = serde_json::json!(-1.0);
    std::fs::write(&cfg, serde_json::to_vec(&doc).unwrap()).unwrap();
    let out = nepspace(&["solve", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("tol"), "{err}");
}

#[test]
fn missing_config_exits_one() {
    let out = nepspace(&["solve", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn bad_arguments_exit_one() {
    let out = nepspace(&["generate", "--kind", "cubic", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn oracle_writes_reference_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = generate_delay(dir.path());
    let out_dir = dir.path().join("oracle");
    let out = nepspace(&["oracle", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("oracle.json")).unwrap()).unwrap();
    assert_eq!(doc["method"], "contour");
    assert!(!doc["eigenvalues"].as_array().unwrap().is_empty());
}
