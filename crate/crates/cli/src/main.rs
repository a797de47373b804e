//! Batch front-end: one declarative config file, one subcommand per
//! pipeline stage. Exit code 0 on success; failures print a one-line
//! machine-parseable `error[<category>]: <message>` to stderr.

use clap::{Parser, Subcommand};
use marketphase::run::{
    run_analyze, run_ingest, run_phase, run_scaling, run_synth, RunConfig, RunError,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "marketphase",
    about = "Spectral market analysis: ingest, analyze, scaling, phase, synth",
    version
)]
struct Cli {
    /// Path to the TOML run configuration.
    #[arg(short, long, global = true, default_value = "marketphase.toml")]
    config: PathBuf,

    /// Override the config's output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Override the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load raw quotes, align and filter them, persist the clean panel.
    Ingest,
    /// Windowed spectral analysis of the persisted panel.
    Analyze,
    /// Sub-market size scaling experiment.
    Scaling,
    /// Sector order parameters and phase labels per window.
    Phase,
    /// Generate a synthetic market in the ingest quote format.
    Synth,
}

fn load_config(cli: &Cli) -> Result<RunConfig, RunError> {
    let mut config = RunConfig::from_file(&cli.config)?;
    if let Some(output) = &cli.output {
        config.output_dir = output.clone();
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn dispatch(cli: &Cli) -> Result<(), RunError> {
    let config = load_config(cli)?;
    match cli.command {
        Command::Ingest => {
            let report = run_ingest(&config)?;
            println!(
                "ingest: {} firms x {} days retained, {} dropped",
                report.n_firms,
                report.n_days,
                report.dropped.len()
            );
            for (ticker, reason) in &report.dropped {
                println!("dropped {ticker}: {reason}");
            }
        }
        Command::Analyze => {
            let report = run_analyze(&config)?;
            println!(
                "analyze: {} windows, bound checks {}/{} passed, r_norm {}",
                report.n_windows, report.bound_checks_passed, report.n_windows, report.r_norm
            );
        }
        Command::Scaling => {
            let points = run_scaling(&config)?;
            println!("scaling: {} group counts evaluated", points.len());
        }
        Command::Phase => {
            let points = run_phase(&config)?;
            println!("phase: {} windows labelled", points.len());
        }
        Command::Synth => {
            run_synth(&config)?;
            println!("synth: wrote quotes.csv and sectors.csv");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error[{}]: {err}", err.category());
            ExitCode::FAILURE
        }
    }
}
