use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use sphere_mv::Error;

mod commands;
mod config;

use config::{Format, RunConfig};

#[derive(Parser)]
#[command(name = "sphere-mv", version, about = "Spectral toolkit for interacting particles on the sphere")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; command-line flags take precedence
    #[arg(long, value_name = "FILE", global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    run: RunConfig,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Gegenbauer coefficients of the kernel
    Decompose,
    /// Linear bifurcation points of the uniform state
    Bifurcations,
    /// Eigenvalues of the linearization at the uniform state
    Spectrum,
    /// Stationary density from a seeded fixed-point iteration
    Solve,
    /// Continuation of a bifurcating branch over a gamma grid
    Branch,
    /// Classification of the phase transition
    Transition,
    /// Interacting particle dynamics
    Simulate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Decompose => "decompose",
            Command::Bifurcations => "bifurcations",
            Command::Spectrum => "spectrum",
            Command::Solve => "solve",
            Command::Branch => "branch",
            Command::Transition => "transition",
            Command::Simulate => "simulate",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    code: u8,
    kind: &'static str,
    message: String,
    diagnostics: Value,
}

impl CliError {
    pub fn invalid(message: impl Into<String>) -> Self {
        Self { code: 2, kind: "invalid_input", message: message.into(), diagnostics: Value::Null }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let diagnostics = match &e {
            Error::NotConverged(fp) => json!({ "residual": fp.residual, "iterations": fp.iterations }),
            Error::NonPositiveDensity { index, value } => json!({ "index": index, "value": value }),
            _ => Value::Null,
        };
        let (code, kind) = if e.is_numerical() { (3, "numerical") } else { (2, "invalid_input") };
        Self { code, kind, message: e.to_string(), diagnostics }
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("SPHERE_MV_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::invalid(format!("SPHERE_MV_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::invalid(format!("cannot configure thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::invalid(format!("cannot read config {}: {e}", path.display())))?;
            let file: RunConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::invalid(format!("bad config {}: {e}", path.display())))?;
            file.merged(cli.run)
        }
        None => cli.run,
    };
    let default_format = match cli.command {
        Command::Transition => Format::Json,
        _ => Format::Csv,
    };
    let format = cfg.format(default_format)?;
    let out = match cli.command {
        Command::Decompose => commands::decompose(&mut cfg),
        Command::Bifurcations => commands::bifurcations(&mut cfg),
        Command::Spectrum => commands::spectrum(&mut cfg),
        Command::Solve => commands::solve(&mut cfg),
        Command::Branch => commands::branch(&mut cfg),
        Command::Transition => commands::transition(&mut cfg),
        Command::Simulate => commands::simulate(&mut cfg),
    }?;
    let text = out.render(format, cli.command.name(), &cfg);
    let written = match &cfg.out {
        Some(path) => std::fs::write(path, text),
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    };
    written.map_err(|e| CliError::invalid(format!("cannot write output: {e}")))?;
    match out.deferred {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = json!({ "error": { "kind": e.kind, "message": e.message, "diagnostics": e.diagnostics } });
            eprintln!("{report}");
            ExitCode::from(e.code)
        }
    }
}
