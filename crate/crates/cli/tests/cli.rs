//! End-to-end checks of the binary: subcommand flow, exit codes, and
//! the one-line error contract.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_marketphase"))
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let config_path = dir.join("run.toml");
    let out_dir = dir.join("out");
    std::fs::write(
        &config_path,
        format!(
            r#"
seed = 5
output_dir = "{}"

[window]
width_days = 120
step_days = 60

[phase]
width_days = 120
step_days = 120
permutations = 30

[scaling]
k_grid = [1, 2, 4]

[synth]
n_firms = 16
n_days = 320
gamma_m = 1.0
gamma = {{ kind = "uniform", low = 0.5, high = 1.5 }}
sectors = ["A", "B", "C", "D"]
"#,
            out_dir.display()
        ),
    )
    .unwrap();
    config_path
}

#[test]
fn full_subcommand_flow_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    for subcommand in ["synth", "ingest", "analyze", "scaling", "phase"] {
        let output = bin()
            .args([subcommand, "--config"])
            .arg(&config)
            .output()
            .unwrap();
        assert!(
            output.status.success(),
            "{subcommand} failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    }
    for file in [
        "quotes.csv",
        "panel_prices.csv",
        "betas.csv",
        "windows.csv",
        "scaling.csv",
        "phase.csv",
        "leaders.csv",
    ] {
        assert!(
            dir.path().join("out").join(file).exists(),
            "missing {file}"
        );
    }
}

#[test]
fn missing_config_fails_with_io_category() {
    let output = bin()
        .args(["analyze", "--config", "/nonexistent/nope.toml"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    let line = stderr.lines().next().unwrap_or_default();
    assert!(line.starts_with("error[io]:"), "stderr: {stderr}");
}

#[test]
fn analyze_before_ingest_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let output = bin().args(["analyze", "--config"]).arg(&config).output().unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.starts_with("error["), "stderr: {stderr}");
    assert_eq!(stderr.lines().count(), 1);
}

#[test]
fn seed_override_changes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let run_synth = |seed: &str, out: &str| {
        let status = bin()
            .args(["synth", "--config"])
            .arg(&config)
            .args(["--seed", seed, "--output"])
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert!(status.success());
    };
    run_synth("1", "a");
    run_synth("2", "b");
    let a = std::fs::read(dir.path().join("a").join("quotes.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b").join("quotes.csv")).unwrap();
    assert_ne!(a, b);
}
