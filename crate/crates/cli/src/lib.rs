//! Command-line front-end for `wavestat`.

pub mod commands;
pub mod config;
pub mod verify;

use clap::{Parser, Subcommand};
use config::{RawConfig, RunConfig};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "wavestat",
    version,
    about = "Random dispersive waves: triads, covariance predictions and Monte Carlo checks"
)]
pub struct Cli {
    /// JSON config file with dotted keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set grid.nmax=32`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Output directory (same as `out.dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Enumerate triads and check the no-resonance bounds.
    Resonances,
    /// Evaluate G_n(t) on every mode.
    Predict,
    /// Coupled Monte Carlo estimate of the covariance correction.
    Covariance,
    /// Growth of the second Picard remainder along a time grid.
    PicardScan,
    /// Moment and tail diagnostics of the sampler.
    SampleDiagnostics,
    /// Run the self-test suite.
    Verify,
}

fn load(cli: &Cli) -> wavestat::Result<(RunConfig, serde_json::Value)> {
    let mut raw = match &cli.config {
        Some(p) => RawConfig::from_file(p)?,
        None => RawConfig::default(),
    };
    for s in &cli.overrides {
        raw.set(s)?;
    }
    if let Some(out) = &cli.out {
        raw.entries.insert(
            "out.dir".into(),
            serde_json::Value::String(out.to_string_lossy().into_owned()),
        );
    }
    let cfg = RunConfig::from_raw(&raw)?;
    Ok((cfg, raw.to_json()))
}

/// Runs one invocation and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let result = load(cli).and_then(|(cfg, echo)| match cli.command {
        Command::Resonances => commands::cmd_resonances(&cfg),
        Command::Predict => commands::cmd_predict(&cfg),
        Command::Covariance => commands::cmd_covariance(&cfg, echo),
        Command::PicardScan => commands::cmd_picard_scan(&cfg),
        Command::SampleDiagnostics => commands::cmd_sample_diagnostics(&cfg),
        Command::Verify => commands::cmd_verify(&cfg),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            commands::EXIT_CONFIG
        }
    }
}
