//! `vaxmap`: command-line front end for the coverage-mapping pipeline.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 failed
//! convergence (outputs are still written), 4 resource cap exceeded. On any
//! non-zero exit a one-line diagnostic goes to stderr and `error.json` is
//! written into the output directory.

mod commands;
mod config;
mod manifest;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use config::{Overrides, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("I/O error on {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error(transparent)]
    Core(#[from] vaxmap_core::Error),
    #[error("convergence failure: {0}")]
    Convergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(vaxmap_core::Error::Resource(_)) => 4,
            CliError::Convergence(_) => 3,
            _ => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Io(..) => "io",
            CliError::Core(vaxmap_core::Error::Resource(_)) => "resource",
            CliError::Core(_) => "input",
            CliError::Convergence(_) => "convergence",
        }
    }
}

#[derive(Parser)]
#[command(name = "vaxmap", version, about = "Bayesian geostatistical vaccination coverage mapping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Clone, Copy, Subcommand)]
enum Command {
    /// Synthetic grid, truth surface and stratified survey.
    Simulate,
    /// Fit a model to cluster data and write the fitted-model file.
    Fit,
    /// Cell-level coverage draws from a fitted model.
    Predict,
    /// Population-weighted area draws from cell draws.
    Aggregate,
    /// Rank distributions and expected ranks of area draws.
    Rank,
    /// Exceedance probabilities at the configured thresholds.
    Exceed,
    /// Classified map with TCP/ATCP, summaries and rendering.
    Classify,
    /// WAIC and leave-one-state-out cross-validation.
    Validate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Fit => "fit",
            Command::Predict => "predict",
            Command::Aggregate => "aggregate",
            Command::Rank => "rank",
            Command::Exceed => "exceed",
            Command::Classify => "classify",
            Command::Validate => "validate",
        }
    }
}

#[derive(Serialize)]
struct ErrorFile<'a> {
    command: &'a str,
    exit_code: u8,
    kind: &'a str,
    message: String,
}

fn run(cli: &Cli, cfg: &RunConfig) -> Result<(), CliError> {
    if let Some(n) = cli.overrides.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    }
    fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::Io(cfg.output_dir.clone(), e))?;
    let stale = cfg.output_dir.join("error.json");
    if stale.exists() {
        fs::remove_file(&stale).map_err(|e| CliError::Io(stale, e))?;
    }
    let done = match cli.command {
        Command::Simulate => commands::simulate(cfg),
        Command::Fit => commands::fit_cmd(cfg),
        Command::Predict => commands::predict(cfg),
        Command::Aggregate => commands::aggregate_cmd(cfg),
        Command::Rank => commands::rank(cfg),
        Command::Exceed => commands::exceed(cfg),
        Command::Classify => commands::classify_cmd(cfg),
        Command::Validate => commands::validate_cmd(cfg),
    }?;
    done.recorder
        .finish(cfg, cli.command.name(), cli.overrides.threads, &done.status)?;
    match done.convergence_failure {
        Some(msg) => Err(CliError::Convergence(msg)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let loaded = RunConfig::load(&cli.overrides);
    let result = loaded.as_ref().map_err(|e| CliError::Validation(e.to_string())).and_then(|cfg| run(&cli, cfg));
    let Err(err) = result else {
        return ExitCode::SUCCESS;
    };
    let code = err.exit_code();
    eprintln!("vaxmap {}: error: {err}", cli.command.name());
    let dir = match &loaded {
        Ok(cfg) => cfg.output_dir.clone(),
        Err(_) => cli.overrides.output_dir.clone().unwrap_or_else(|| PathBuf::from(".")),
    };
    let record = ErrorFile {
        command: cli.command.name(),
        exit_code: code,
        kind: err.kind(),
        message: err.to_string(),
    };
    if fs::create_dir_all(&dir).is_ok() {
        if let Ok(json) = serde_json::to_string_pretty(&record) {
            let _ = fs::write(dir.join("error.json"), json + "\n");
        }
    }
    ExitCode::from(code)
}
