//! End-to-end tests of the `bellfn` binary: exit codes, output shapes,
//! and dump/reload round trips.

use std::process::{Command, Output};

fn bellfn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bellfn"))
        .args(args)
        .output()
        .expect("failed to run bellfn")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

#[test]
fn usage_errors_exit_2() {
    let out = bellfn(&["no-such-command"]);
    assert_eq!(exit_code(&out), 2);
    let out = bellfn(&["evaluate"]); // --v is required
    assert_eq!(exit_code(&out), 2);
    let out = bellfn(&["evaluate", "--v", "1.5"]);
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn missing_file_exits_3() {
    let out = bellfn(&["discretize", "--file-a", "/nonexistent/settings.txt"]);
    assert_eq!(exit_code(&out), 3);
    let out = bellfn(&["simulate", "--from-file", "/nonexistent/events.csv"]);
    assert_eq!(exit_code(&out), 3);
}

#[test]
fn malformed_settings_file_exits_3_with_line_number() {
    let dir = std::env::temp_dir().join("bellfn-cli-bad");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.txt");
    std::fs::write(&path, "# comment\n0.5 0.5\nnot numbers\n").unwrap();
    let out = bellfn(&["discretize", "--file-a", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains('3'));
}

#[test]
fn evaluate_reports_expected_margins() {
    // v=1: quantum 52.637..., bound 49.348..., margin positive
    let out = bellfn(&["--format", "jsonl", "evaluate", "--v", "1"]);
    assert_eq!(exit_code(&out), 0);
    let report: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert!((report["quantum_value"].as_f64().unwrap() - 52.637890139143246).abs() < 1e-9);
    assert!((report["lhv_bound"].as_f64().unwrap() - 49.34802200544679).abs() < 1e-9);
    assert!(report["margin"].as_f64().unwrap() > 0.0);

    // below threshold the margin is negative
    let out = bellfn(&["--format", "jsonl", "evaluate", "--v", "0.5"]);
    let report: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert!(report["margin"].as_f64().unwrap() < 0.0);
}

#[test]
fn sweep_brackets_the_threshold() {
    let out = bellfn(&["--format", "csv", "sweep", "--steps", "11"]);
    assert_eq!(exit_code(&out), 0);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 12); // header + 11 rows
    assert_eq!(lines[0], "v,quantum_value,lhv_bound,margin");
    let margins: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    // sign change between v=0.7 and v=0.8
    assert!(margins[7] < 0.0 && margins[8] > 0.0);
}

#[test]
fn threshold_lists_reference_constants() {
    let out = bellfn(&["--format", "jsonl", "threshold", "--geometry", "coplanar"]);
    assert_eq!(exit_code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert!((v["threshold_v"].as_f64().unwrap() - 8.0 / (std::f64::consts::PI.powi(2))).abs() < 1e-12);
    assert!((v["gisin"].as_f64().unwrap() - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    assert_eq!(v["chained_limit"].as_f64().unwrap(), 1.0);
}

#[test]
fn discretize_single_setting_reports_no_violation() {
    // one setting per side can always be matched classically
    let dir = std::env::temp_dir().join("bellfn-cli-single");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("one.txt");
    std::fs::write(&path, "1.0 2.0\n").unwrap();
    let out = bellfn(&[
        "--format",
        "csv",
        "discretize",
        "--file-a",
        path.to_str().unwrap(),
        "--threshold",
    ]);
    assert_eq!(exit_code(&out), 0);
    let text = stdout(&out);
    let row = text.lines().nth(1).unwrap();
    assert!(row.ends_with("no-violation"), "row: {row}");
}

#[test]
fn discretize_grid_threshold_near_continuum() {
    let out = bellfn(&["--format", "csv", "discretize", "--order", "16x32", "--threshold"]);
    assert_eq!(exit_code(&out), 0);
    let text = stdout(&out);
    let row = text.lines().nth(1).unwrap();
    let threshold: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
    assert!((threshold - 0.75).abs() < 0.01, "threshold {threshold}");
}

#[test]
fn simulate_dump_then_reload_reproduces_the_report() {
    let dir = std::env::temp_dir().join("bellfn-cli-roundtrip");
    std::fs::create_dir_all(&dir).unwrap();
    let csv = dir.join("events.csv");
    let args = [
        "--format",
        "csv",
        "simulate",
        "--source",
        "quantum",
        "--v",
        "0.9",
        "--n",
        "5000",
        "--seed",
        "5",
    ];
    let direct = bellfn(
        &args
            .iter()
            .copied()
            .chain(["--dump", csv.to_str().unwrap()])
            .collect::<Vec<_>>(),
    );
    assert_eq!(exit_code(&direct), 0);
    assert!(csv.exists());
    assert!(dir.join("events.csv.meta.json").exists());

    let reloaded = bellfn(&[
        "--format",
        "csv",
        "simulate",
        "--from-file",
        csv.to_str().unwrap(),
        "--v-assumed",
        "0.9",
    ]);
    assert_eq!(exit_code(&reloaded), 0);
    assert_eq!(stdout(&direct), stdout(&reloaded));
}

#[test]
fn simulate_lhv_source_does_not_violate() {
    let out = bellfn(&[
        "--format",
        "jsonl",
        "simulate",
        "--source",
        "lhv-hemisphere",
        "--v-assumed",
        "1.0",
        "--n",
        "200000",
        "--seed",
        "3",
    ]);
    assert_eq!(exit_code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_ne!(v["verdict"].as_str().unwrap(), "violation");
    // anti-aligned hemisphere axes sit at the LHV bound
    let est = v["functional_estimate"].as_f64().unwrap();
    let se = v["std_error"].as_f64().unwrap();
    assert!((est - 49.34802200544679).abs() < 5.0 * se);
}

#[test]
fn jsonl_outputs_parse() {
    for args in [
        vec!["--format", "jsonl", "evaluate", "--v", "0.8", "--geometry", "coplanar"],
        vec!["--format", "jsonl", "threshold"],
        vec!["--format", "jsonl", "optimize-lhv", "--v", "0.5", "--budget", "500"],
    ] {
        let out = bellfn(&args);
        assert_eq!(exit_code(&out), 0, "{args:?}");
        for line in stdout(&out).lines() {
            serde_json::from_str::<serde_json::Value>(line).expect("valid json line");
        }
    }
}
