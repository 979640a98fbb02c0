use std::path::PathBuf;
use std::process::{Command, Output};

use iobound::FactoredDecPOMDP;

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("iobound-cli-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn iobound(dir: &PathBuf, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iobound"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn generated_model_is_valid_and_stamped() {
    let dir = workdir("generate");
    let out = iobound(
        &dir,
        &["generate", "ffg", "--agents", "2", "--horizon", "2", "-o", "m.json"],
    );
    assert!(out.status.success());
    let m = FactoredDecPOMDP::from_json(&std::fs::read_to_string(dir.join("m.json")).unwrap()).unwrap();
    assert!(m.validate().is_empty());
    assert_eq!(m.horizon, 2);
    assert_eq!(m.provenance.unwrap().generator, "ffg");
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn invalid_input_exits_with_two() {
    let dir = workdir("invalid");
    std::fs::write(dir.join("bad.json"), r#"{"agents": ["a"], "factors": []}"#).unwrap();
    let out = iobound(&dir, &["bound", "mmdp", "--model", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn cap_exceeded_exits_with_two() {
    let dir = workdir("cap");
    iobound(
        &dir,
        &["generate", "ffg", "--agents", "2", "--horizon", "3", "-o", "m.json"],
    );
    let out = iobound(&dir, &["--cap", "100", "oracle", "solve", "--model", "m.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("100"));
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn missing_file_is_a_plain_failure() {
    let dir = workdir("missing");
    let out = iobound(&dir, &["bound", "mmdp", "--model", "nope.json"]);
    assert_eq!(out.status.code(), Some(1));
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn csv_numbers_have_six_significant_digits() {
    let dir = workdir("csv");
    let out = iobound(&dir, &["--out", "csv", "eaf", "--ub", "-360", "--heur", "-382.47"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("1.06242"), "{text}");
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn mixed_signs_are_rejected() {
    let dir = workdir("eaf");
    let out = iobound(&dir, &["eaf", "--ub", "1", "--heur", "-1"]);
    assert!(!out.status.success());
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn oracle_solution_evaluates_to_its_value() {
    let dir = workdir("oracle");
    iobound(
        &dir,
        &["generate", "ffg", "--agents", "2", "--horizon", "2", "-o", "m.json"],
    );
    assert!(
        iobound(&dir, &["oracle", "solve", "--model", "m.json", "-o", "sol.json"])
            .status
            .success()
    );
    let sol: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("sol.json")).unwrap()).unwrap();
    let out = iobound(&dir, &["oracle", "eval", "--model", "m.json", "--policy", "sol.json"]);
    let eval: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let (a, b) = (sol["value"].as_f64().unwrap(), eval["total"].as_f64().unwrap());
    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    std::fs::remove_dir_all(dir).ok();
}
