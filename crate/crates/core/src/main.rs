use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use kpss::experiment::{render_csv, run_experiment, ConfigError, Experiment, ExperimentConfig, FileConfig};

/// Run a k-polar slice sampling experiment and write its results as CSV.
#[derive(Debug, Parser)]
#[command(name = "kpss", version)]
struct Cli {
    /// stationarity | contraction | sharpness | empirical-gap | levelset |
    /// lambda-k | gap-bound | figure-appB-left | figure-appB-right
    experiment: Experiment,

    /// TOML config file. Without one, built-in defaults are used.
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long)]
    seed: Option<u64>,

    /// Output CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long)]
    threads: Option<usize>,
}

fn run(cli: Cli) -> Result<ExitCode, ConfigError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let mut cfg = ExperimentConfig::new(cli.experiment, file);
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.out.is_some() {
        cfg.out = cli.out;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    let report = run_experiment(&cfg)?;
    let csv = render_csv(&cfg, &report)?;
    match &cfg.out {
        Some(path) => std::fs::write(path, csv).map_err(|e| ConfigError::Output(format!("{}: {e}", path.display())))?,
        None => print!("{csv}"),
    }
    for e in &report.errors {
        eprintln!("cell {} ({}) failed: {}", e.cell, e.label, e.message);
    }
    eprintln!(
        "{}: {} rows, {} failed, seed {}{}",
        cfg.experiment,
        report.rows.len(),
        report.errors.len(),
        cfg.seed,
        cfg.out.as_ref().map(|p| format!(", written to {}", p.display())).unwrap_or_default()
    );
    Ok(if report.all_failed() { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
