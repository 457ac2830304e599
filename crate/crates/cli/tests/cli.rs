use std::path::PathBuf;
use std::process::{Command, Output};

use fpentropy::report::{from_json, CHECKS_HEADER, SIMULATION_HEADER, SPHERES_HEADER};

fn fpentropy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpentropy"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fpentropy-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn passing_analysis_exits_zero() {
    let o = fpentropy(&["analyze", "--preset", "two-factor"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("0.32005"));
    let alias = fpentropy(&["validate", "--preset", "paper-7.1"]);
    assert_eq!(alias.status.code(), Some(0));
}

#[test]
fn failed_check_exits_one_with_a_summary() {
    let o = fpentropy(&["analyze", "--preset", "zz2", "--format", "json"]);
    assert_eq!(o.status.code(), Some(1));
    let report = from_json(&stdout(&o)).unwrap();
    assert!(!report.passed());
    let failed: Vec<&str> = report.failed_checks().iter().map(|c| c.name.as_str()).collect();
    assert_eq!(failed, ["reference_h"]);
    let summary: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(summary["passed"], false);
    assert_eq!(summary["failed_checks"][0]["name"], "reference_h");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(fpentropy(&["analyze", "--preset", "nope"]).status.code(), Some(2));
    assert_eq!(fpentropy(&["analyze"]).status.code(), Some(2));
    let missing = fpentropy(&["analyze", "--config", "/nonexistent/spec.cfg"]);
    assert_ne!(missing.status.code(), Some(0));
}

#[test]
fn bad_config_reports_the_failing_stage() {
    let dir = scratch("bad");
    let path = dir.join("bad.cfg");
    std::fs::write(
        &path,
        "[factor A]\nstates = a b\nedge a b 1\nedge b a 1/2\n\n[factor B]\nstates = c d e\nedge c d 1\nedge d e 1\nedge e c 1\n\n[product]\nalphas = 1/2 1/2\n",
    )
    .unwrap();
    let o = fpentropy(&["analyze", "--config", path.to_str().unwrap(), "--format", "json"]);
    assert_eq!(o.status.code(), Some(1));
    let report = from_json(&stdout(&o)).unwrap();
    let failure = report.failure.expect("stage failure");
    assert_eq!(serde_json::to_value(failure.stage).unwrap(), "validate");
    assert!(report.xi.is_none());

    std::fs::write(&path, "[factor A]\nstates = a\nedge a\n").unwrap();
    let o = fpentropy(&["validate", "--config", path.to_str().unwrap(), "--format", "json"]);
    assert_eq!(o.status.code(), Some(1));
    let report = from_json(&stdout(&o)).unwrap();
    assert_eq!(serde_json::to_value(report.failure.unwrap().stage).unwrap(), "parse");
}

#[test]
fn config_file_matches_the_preset() {
    let dir = scratch("cfg");
    let path = dir.join("two.cfg");
    std::fs::write(&path, fpentropy::presets::TWO_FACTOR_CONFIG).unwrap();
    let file = fpentropy(&["analyze", "--config", path.to_str().unwrap(), "--format", "json"]);
    let preset = fpentropy(&["analyze", "--preset", "two-factor", "--format", "json"]);
    let a = from_json(&stdout(&file)).unwrap();
    let b = from_json(&stdout(&preset)).unwrap();
    assert_eq!(a.entropy, b.entropy);
    assert_eq!(a.ell0, b.ell0);
}

#[test]
fn csv_output_writes_fixed_headers() {
    let dir = scratch("csv");
    let o = fpentropy(&[
        "analyze",
        "--preset",
        "two-factor",
        "--walkers",
        "200",
        "--horizon",
        "200",
        "--format",
        "csv",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for (file, header) in [
        ("checks.csv", CHECKS_HEADER),
        ("spheres.csv", SPHERES_HEADER),
        ("simulation.csv", SIMULATION_HEADER),
    ] {
        let text = std::fs::read_to_string(dir.join(file)).unwrap();
        assert_eq!(text.lines().next(), Some(header), "{file}");
        assert!(text.lines().count() > 1, "{file}");
    }
    let spheres = std::fs::read_to_string(dir.join("spheres.csv")).unwrap();
    assert!(spheres.lines().any(|l| l == "12,93312,987,987"));
}

#[test]
fn json_is_deterministic_modulo_timing() {
    let args = [
        "simulate",
        "--preset",
        "two-factor",
        "--walkers",
        "300",
        "--horizon",
        "300",
    ];
    let run = |extra: &[&str]| {
        let mut a = args.to_vec();
        a.extend_from_slice(extra);
        a.extend_from_slice(&["--format", "json"]);
        from_json(&stdout(&fpentropy(&a))).unwrap().without_timing()
    };
    let a = run(&["--seed", "4"]);
    assert_eq!(a, run(&["--seed", "4"]));
    assert_eq!(a, run(&["--seed", "4", "--serial"]));
    assert_ne!(a, run(&["--seed", "5"]));
}

#[test]
fn growth_command_reports_spheres() {
    let o = fpentropy(&["growth", "--preset", "two-factor", "--depth", "8", "--format", "json"]);
    assert!(o.status.success());
    let g = from_json(&stdout(&o)).unwrap().growth.unwrap();
    assert_eq!(g.sphere_counts_metric, [1, 2, 4, 7, 12, 21, 36, 63, 109]);
    assert!((g.lambda0 - 6f64.sqrt()).abs() < 1e-10);
}

#[test]
fn group_preset_rejects_simulation() {
    let o = fpentropy(&["simulate", "--preset", "zz2", "--format", "json"]);
    assert_eq!(o.status.code(), Some(1));
    let report = from_json(&stdout(&o)).unwrap();
    assert_eq!(serde_json::to_value(report.failure.unwrap().stage).unwrap(), "config");
}
