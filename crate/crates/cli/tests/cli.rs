use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cachemimo"))
}

fn small_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/small.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("UTF-8 output")
}

#[test]
fn selftest_passes() {
    let out = run(&["selftest"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.lines().all(|l| !l.starts_with("FAIL")));
    assert!(text.trim_end().ends_with("0 failed"));
}

#[test]
fn simulate_writes_csv_to_stdout() {
    let config = small_config();
    let out = run(&["simulate", "--config", config.to_str().unwrap(), "--workers", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("sweep_value,scheme,precoder,formula,ecdr_mean,ecdr_stderr,trials,seed,infeasible_count")
    );
    // 2 grid points x 2 schemes x 3 precoders x (closed form + 2 Monte Carlo rows).
    assert_eq!(lines.count(), 36);
    assert!(text.contains(",montecarlo,"));
}

#[test]
fn output_is_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config();
    let mut files = Vec::new();
    for workers in ["1", "3"] {
        let path = dir.path().join(format!("w{workers}.csv"));
        let out = run(&[
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--workers",
            workers,
            "--seed",
            "99",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        files.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert!(String::from_utf8_lossy(&files[0]).contains(",99,"));
}

#[test]
fn json_output_is_an_array_of_rows() {
    let config = small_config();
    let out = run(&["simulate", "--config", config.to_str().unwrap(), "--trials", "4", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.trim_start().starts_with('['));
    assert!(text.contains("\"infeasible_count\""));
}

#[test]
fn analyze_emits_closed_forms_only() {
    let config = small_config();
    let out = run(&["analyze", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1 + 12);
    assert!(!text.contains("montecarlo"));
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"B": 2, "gama": 3.8}"#).unwrap();
    assert_eq!(run(&["simulate", "--config", bad.to_str().unwrap()]).status.code(), Some(2));

    let config = small_config();
    let zero = run(&["simulate", "--config", config.to_str().unwrap(), "--trials", "0"]);
    assert_eq!(zero.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&zero.stderr).contains("trial"));

    // Usage errors share the code.
    assert_eq!(run(&["simulate", "--preset", "fig9"]).status.code(), Some(2));
}

#[test]
fn io_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let out = run(&["analyze", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));

    let config = small_config();
    let unwritable = dir.path().join("no/such/dir/out.csv");
    let out = run(&["analyze", "--config", config.to_str().unwrap(), "--out", unwritable.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("out.csv"));
}
