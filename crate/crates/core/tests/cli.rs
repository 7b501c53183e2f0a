use std::path::Path;
use std::process::Command;

fn cpo() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cpo"))
}

fn solve(dir: &Path, name: &str, text: &str) -> std::process::Output {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    cpo().args(["solve", "--problem"]).arg(&path).output().unwrap()
}

#[test]
fn solve_reports_step_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    let ok = solve(dir.path(), "ok.txt", "g = 1, 0\nb = 0, 1\nc = -1\ndelta = 0.5\nH = identity\n");
    assert_eq!(ok.status.code(), Some(0));
    let out = String::from_utf8(ok.stdout).unwrap();
    assert!(out.contains("direction = "));
    assert!(out.contains("case_tag = trust_region_only"), "{out}");

    let infeasible = solve(dir.path(), "bad.txt", "g = 1, 0\nb = 1, 0\nc = 5\ndelta = 0.5\nH = 2, 0; 0, 1\n");
    assert_eq!(infeasible.status.code(), Some(2));
    assert!(String::from_utf8(infeasible.stdout).unwrap().contains("case_tag = infeasible"));

    let malformed = solve(dir.path(), "junk.txt", "g = 1, zero\n");
    assert_eq!(malformed.status.code(), Some(1));
    assert!(!malformed.stderr.is_empty());
}

#[test]
fn verify_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("solver.csv");
    let status = cpo()
        .args(["verify", "--suite", "solver", "--trials", "20", "--seed", "4", "--report"])
        .arg(&report)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.lines().count() > 20);
    assert!(text.lines().skip(1).all(|l| l.ends_with("true")));
}

#[test]
fn train_from_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "algorithm = \"cpo\"\niterations = 2\nbatch_size = 300\nconstraint_limit = 5.0\n\n[environment]\nid = \"point_circle\"\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let status = cpo().args(["train", "--config"]).arg(&config).arg("--out").arg(&out_dir).status().unwrap();
    assert!(status.success());
    let metrics = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    assert!(out_dir.join("checkpoints").join("final.bin").exists());
}

#[test]
fn unknown_suite_is_rejected() {
    let out = cpo().args(["verify", "--suite", "everything"]).output().unwrap();
    assert!(!out.status.success());
}
