//! End-to-end tests of the `slsreg` binary: output schemas, exit codes,
//! determinism across processes, and the dump formats.

use std::path::{Path, PathBuf};
use std::process::Command;

fn slsreg() -> Command {
    Command::new(env!("CARGO_BIN_EXE_slsreg"))
}

fn temp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("slsreg-cli-tests").join(name);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn tiny_sweep_args(out: &Path) -> Vec<String> {
    [
        "sweep",
        "--scenario",
        "synthetic-stable",
        "--horizon-min",
        "2",
        "--horizon-max",
        "3",
        "--trials",
        "2",
        "--noise",
        "gaussian,worst-case",
        "--seed",
        "9",
        "--out",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([out.display().to_string()])
    .collect()
}

#[test]
fn sweep_writes_all_outputs_with_exact_header() {
    let dir = temp_dir("sweep-outputs");
    let status = slsreg().args(tiny_sweep_args(&dir)).status().unwrap();
    assert!(status.success());
    let records = std::fs::read_to_string(dir.join("records.csv")).unwrap();
    assert!(records.starts_with(
        "scenario,controller,T,noise,trial,seed,cost,regret,safety_margin,solve_time,status\n"
    ));
    // 2 horizons x 4 controllers x 2 kinds x 2 trials rows + header.
    assert_eq!(records.lines().count(), 1 + 2 * 4 * 2 * 2);
    assert!(dir.join("summary.csv").exists());
    assert!(dir.join("synthesis.csv").exists());
    let svg = std::fs::read_to_string(dir.join("costs.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn sweep_is_deterministic_across_processes() {
    let dir1 = temp_dir("determinism-1");
    let dir2 = temp_dir("determinism-2");
    assert!(slsreg()
        .args(tiny_sweep_args(&dir1))
        .status()
        .unwrap()
        .success());
    assert!(slsreg()
        .args(tiny_sweep_args(&dir2))
        .status()
        .unwrap()
        .success());
    for file in ["records.csv", "summary.csv", "costs.svg"] {
        let a = std::fs::read(dir1.join(file)).unwrap();
        let b = std::fs::read(dir2.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs across runs");
    }
}

#[test]
fn plot_from_summary_matches_sweep_plot() {
    let dir = temp_dir("replot");
    assert!(slsreg()
        .args(tiny_sweep_args(&dir))
        .status()
        .unwrap()
        .success());
    let replot = dir.join("replot.svg");
    let status = slsreg()
        .args([
            "plot",
            "--summary",
            &dir.join("summary.csv").display().to_string(),
            "--out",
            &replot.display().to_string(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        std::fs::read(dir.join("costs.svg")).unwrap(),
        std::fs::read(&replot).unwrap()
    );
}

#[test]
fn synthesize_dumps_parseable_matrices() {
    let dir = temp_dir("synthesize");
    let status = slsreg()
        .args([
            "synthesize",
            "--scenario",
            "synthetic-stable",
            "--horizon",
            "4",
            "--out",
            &dir.display().to_string(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let gains =
        sls_regret_cli::dump::read_matrix(&dir.join("synthetic-stable-T4/regret_gains.txt"))
            .unwrap();
    // d_u*T x d_y*T for the synthetic system.
    assert_eq!(gains.shape(), (8, 8));
    let phi =
        sls_regret_cli::dump::read_matrix(&dir.join("synthetic-stable-T4/regret_phi.txt")).unwrap();
    assert_eq!(phi.shape(), (12 + 8, 12 + 8));
}

#[test]
fn usage_error_exits_2() {
    let out = slsreg()
        .args(["sweep", "--scenario", "bogus"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infeasible_safety_exits_1_and_is_recorded() {
    let dir = temp_dir("infeasible");
    let config = dir.join("tight.toml");
    std::fs::write(
        &config,
        r#"
[scenario]
name = "synthetic-stable"

[sweep]
horizon_min = 3
horizon_max = 3
trials = 1
noise = ["gaussian"]
controllers = ["regret"]

[bounds]
state = 0.05
"#,
    )
    .unwrap();
    let out = slsreg()
        .args([
            "sweep",
            "--config",
            &config.display().to_string(),
            "--out",
            &dir.display().to_string(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "stdout: {:?}", out);
    let records = std::fs::read_to_string(dir.join("records.csv")).unwrap();
    let row = records.lines().nth(1).unwrap();
    assert!(row.ends_with(",infeasible"), "row: {row}");
    assert!(row.contains(",NaN,"));
}

#[test]
fn config_flags_override_file() {
    let dir = temp_dir("override");
    let config = dir.join("config.toml");
    std::fs::write(
        &config,
        r#"
[scenario]
name = "synthetic-stable"

[sweep]
horizon_min = 2
horizon_max = 2
trials = 5
noise = ["gaussian"]
controllers = ["h2"]
seed = 1
"#,
    )
    .unwrap();
    // Flag overrides trials to 3.
    let status = slsreg()
        .args([
            "sweep",
            "--config",
            &config.display().to_string(),
            "--trials",
            "3",
            "--out",
            &dir.display().to_string(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let records = std::fs::read_to_string(dir.join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 1 + 3);
}

#[test]
fn verify_passes_on_small_scenario() {
    let out = slsreg()
        .args(["verify", "--scenario", "synthetic-stable", "--horizon", "3"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("PASS"));
    assert!(!text.contains("FAIL"));
}
