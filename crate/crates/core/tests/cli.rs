//! Black-box tests of the `pintkit` binary: exit codes, artifact layout, and
//! output schemas.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn pintkit<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_pintkit"))
        .args(args)
        .output()
        .expect("binary launches")
}

#[test]
fn run_writes_artifacts_and_exits_zero_on_convergence() {
    let out = tempfile::tempdir().unwrap();
    let result = pintkit([
        "run".as_ref(),
        "--config".as_ref(),
        config_path("linear.toml").as_os_str(),
        "--out".as_ref(),
        out.path().as_os_str(),
    ]);
    assert_eq!(
        result.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );

    let stdout = String::from_utf8(result.stdout).unwrap();
    assert!(
        stdout.contains("status=converged"),
        "summary line missing: {stdout}"
    );

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("report.json")).unwrap())
            .unwrap();
    for key in [
        "config",
        "status",
        "iterations",
        "final_states",
        "trace",
        "cost",
        "diagnostics",
    ] {
        assert!(report.get(key).is_some(), "report.json missing `{key}`");
    }

    let trace = std::fs::read_to_string(out.path().join("trace.csv")).unwrap();
    assert_eq!(
        trace.lines().next().unwrap(),
        "k,interval,update_inf_norm,converged,fine_ms,coarse_ms,model_ms"
    );
    let rows = trace.lines().count() - 1;
    let expected: usize = report["trace"]
        .as_array()
        .unwrap()
        .iter()
        .map(|it| it["intervals"].as_array().unwrap().len())
        .sum();
    assert_eq!(rows, expected, "trace rows disagree with report");

    let svg = std::fs::read_to_string(out.path().join("convergence.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn exhausted_budget_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny_budget.toml");
    let text = std::fs::read_to_string(config_path("linear.toml"))
        .unwrap()
        .replace("budget_seconds = 172800", "")
        + "\nbudget_seconds = 1e-9\n";
    std::fs::write(&config, text).unwrap();
    let result = pintkit([
        "run".as_ref(),
        "--config".as_ref(),
        config.as_os_str(),
        "--out".as_ref(),
        dir.path().join("out").as_os_str(),
    ]);
    assert_eq!(
        result.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    assert!(String::from_utf8(result.stdout)
        .unwrap()
        .contains("status=budget_exhausted"));
}

#[test]
fn errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();

    let missing = pintkit(["run", "--config", "no/such/file.toml"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[system]\nname = \"linear\"\nmystery = 1\n").unwrap();
    let invalid = pintkit([
        "run".as_ref(),
        "--config".as_ref(),
        bad.as_os_str(),
        "--out".as_ref(),
        dir.path().join("out").as_os_str(),
    ]);
    assert_eq!(invalid.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&invalid.stderr).contains("mystery"));

    let unknown = pintkit(["frobnicate"]);
    assert_eq!(unknown.status.code(), Some(1));
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(pintkit(["--help"]).status.code(), Some(0));
    assert_eq!(pintkit(["--version"]).status.code(), Some(0));
    assert_eq!(pintkit(["run", "--help"]).status.code(), Some(0));
}

#[test]
fn compare_writes_per_model_reports_and_summary() {
    let out = tempfile::tempdir().unwrap();
    let result = pintkit([
        "compare".as_ref(),
        "--config".as_ref(),
        config_path("linear.toml").as_os_str(),
        "--out".as_ref(),
        out.path().as_os_str(),
    ]);
    assert_eq!(
        result.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );

    let summary = std::fs::read_to_string(out.path().join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(
        lines.next().unwrap(),
        "model,status,iterations,accuracy_vs_fine,t_model_seconds,t_alg_modeled_seconds,s_alg_modeled"
    );
    let models: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(models, ["parareal", "nngp", "randnet"]);
    for model in &models {
        assert!(out.path().join(format!("report_{model}.json")).exists());
    }
}

#[test]
fn sweep_and_costmodel_write_expected_tables() {
    let out = tempfile::tempdir().unwrap();
    let result = pintkit([
        "sweep".as_ref(),
        "--config".as_ref(),
        config_path("linear.toml").as_os_str(),
        "--m-values".as_ref(),
        "2,4".as_ref(),
        "--hidden-values".as_ref(),
        "20".as_ref(),
        "--seeds".as_ref(),
        "2".as_ref(),
        "--out".as_ref(),
        out.path().as_os_str(),
    ]);
    assert_eq!(
        result.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    let sweep = std::fs::read_to_string(out.path().join("sweep.csv")).unwrap();
    assert_eq!(
        sweep.lines().next().unwrap(),
        "m,hidden,seed,iterations,outcome"
    );
    // header + 2 m-values x 1 hidden width x 2 seeds
    assert_eq!(sweep.lines().count(), 5);

    let cost_out = tempfile::tempdir().unwrap();
    let result = pintkit([
        "costmodel".as_ref(),
        "--dims".as_ref(),
        "100,1000,10000".as_ref(),
        "--out".as_ref(),
        cost_out.path().as_os_str(),
    ]);
    assert_eq!(result.status.code(), Some(0));
    let table = std::fs::read_to_string(cost_out.path().join("costmodel.csv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "dimension,t_nngp,t_randnet");
    assert_eq!(table.lines().count(), 4);
    assert!(cost_out.path().join("costmodel.svg").exists());
}
