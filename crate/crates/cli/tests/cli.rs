use std::path::Path;
use std::process::{Command, Output};

fn hjblab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hjblab"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn help_lists_every_preset() {
    let out = Command::new(env!("CARGO_BIN_EXE_hjblab")).args(["solve", "--help"]).output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    for name in hjblab_core::presets::PRESET_NAMES {
        assert!(text.contains(name), "{name} missing");
    }
}

#[test]
fn riccati_reports_the_blow_up_time() {
    let dir = tempfile::tempdir().unwrap();
    let out = hjblab(dir.path(), &["riccati", "--rho", "0.5", "--T", "2"]);
    assert!(out.status.success());
    let report = json(&dir.path().join("riccati.json"));
    let tau = 2.0 - 0.5 * 3f64.ln();
    assert!((report["blowup_time"].as_f64().unwrap() - tau).abs() < 1e-12);
    assert_eq!(report["rk4_blew_up"], true);
}

#[test]
fn solve_writes_full_precision_csv_and_oracle_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = hjblab(dir.path(), &["solve", "--preset", "lq", "--name", "run"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x,w"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row.len(), 3);
    // terminal layer of the LQ preset: w = −x² at t = T
    assert_eq!(row[0], 1.0);
    assert_eq!(row[2], -row[1] * row[1]);
    let report = json(&dir.path().join("run.json"));
    assert!(report["oracle"]["max_rel_err"].as_f64().unwrap() < 2e-2);
}

#[test]
fn verify_barriers_passes_and_writes_one_file_per_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = hjblab(dir.path(), &["verify", "--suite", "barriers"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json(&dir.path().join("verify-barriers.json"));
    let checks = summary["checks"].as_array().unwrap();
    assert!(!checks.is_empty());
    for check in checks {
        let name = check["name"].as_str().unwrap();
        assert!(dir.path().join("verify-barriers").join(format!("{name}.json")).exists());
    }
}

#[test]
fn exit_codes_follow_the_documented_mapping() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(hjblab(dir.path(), &["solve", "--preset", "nope"]).status.code(), Some(2));
    assert_eq!(hjblab(dir.path(), &["solve", "--preset", "lq", "--dx", "-1"]).status.code(), Some(2));
    assert_eq!(hjblab(dir.path(), &["solve", "--preset", "lq", "--dt", "1.0"]).status.code(), Some(2));
    assert_eq!(hjblab(dir.path(), &["verify", "--suite", "nope"]).status.code(), Some(2));
    assert_eq!(hjblab(dir.path(), &["mc", "--preset", "const-h"]).status.code(), Some(2));
    assert_eq!(hjblab(dir.path(), &["solve", "--preset", "lq-blowup"]).status.code(), Some(3));
    assert_eq!(hjblab(dir.path(), &["solve", "--preset", "lq-blowup", "--expect-blowup"]).status.code(), Some(0));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "preset = \"lq\"\nunknown_key = 1\n").unwrap();
    assert_eq!(hjblab(dir.path(), &["--config", bad.to_str().unwrap(), "solve"]).status.code(), Some(2));
}

#[test]
fn saved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let saved = dir.path().join("saved.toml");
    let args = ["--save-config", saved.to_str().unwrap(), "solve", "--preset", "finance", "--rho", "0.3", "--dx", "0.05", "--name", "a"];
    assert!(hjblab(dir.path(), &args).status.success());
    let replay = hjblab(dir.path(), &["--config", saved.to_str().unwrap(), "solve"]);
    assert!(replay.status.success(), "{}", String::from_utf8_lossy(&replay.stderr));
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let first = std::fs::read_to_string(&saved).unwrap();
    assert!(first.contains("rho = 0.3"));
    // the replay writes the same name, so the CSV must be unchanged
    assert_eq!(std::fs::read(dir.path().join("a.csv")).unwrap(), a);
}

#[test]
fn inline_problem_from_a_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inline.toml");
    std::fs::write(
        &path,
        r#"
[problem]
kind = "inf-quadratic"
lo = [-2.0]
hi = [2.0]
dx = 0.05
"#,
    )
    .unwrap();
    let out = hjblab(dir.path(), &["--config", path.to_str().unwrap(), "solve", "--name", "inline"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("inline.csv").exists());
}
