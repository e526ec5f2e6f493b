mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dyson_circ::io::json_hash;
use dyson_circ::Error;
use serde_json::json;

use config::RunConfig;
use output::{Artifact, Format};

#[derive(Parser)]
#[command(name = "dyson-circ", version, about = "Self-consistent density of inhomogeneous circular laws")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; without it results go to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, env = "DYSON_CIRC_THREADS")]
    threads: Option<usize>,
    /// Overrides the seeds of `simulate` and `check`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Density profile of the model.
    Density,
    /// Sample the ensemble and compare with the deterministic prediction.
    Simulate,
    /// Run the invariant suite; exits with 1 if any invariant fails.
    Check,
    /// Brown measure of a Kronecker model's coefficients.
    Brown,
}

/// Failure with its exit status.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            kind: "usage",
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::InvalidModel(_) => (2, "invalid_model"),
            Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => (2, "invalid_argument"),
            Error::InsufficientGrid(_) => (2, "insufficient_grid"),
            Error::EdgeProximity { .. } | Error::InsideBulk { .. } => (2, "precondition"),
            Error::ZeroOperator => (2, "invalid_model"),
            Error::Json(_) => (2, "schema"),
            _ => (1, "numerical"),
        };
        Self {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::usage("--config is required"))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = RunConfig::from_json(&text).map_err(|e| Failure {
        code: 2,
        kind: "schema",
        message: e.to_string(),
    })?;
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    let cfg = load_config(cli)?;
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Failure::usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    let hash = json_hash(&cfg)?;
    let artifact: Artifact = match cli.command {
        Command::Density => commands::density(&cfg)?,
        Command::Simulate => commands::simulate(&cfg)?,
        Command::Check => commands::check(&cfg)?,
        Command::Brown => commands::brown(&cfg)?,
    };
    artifact
        .emit(&hash, cli.format, cli.out.as_deref())
        .map_err(|e| Failure {
            code: 1,
            kind: "io",
            message: e.to_string(),
        })?;
    Ok(!artifact.failed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            let body = json!({ "error": { "kind": f.kind, "message": f.message }, "exit_code": f.code });
            eprintln!("{body}");
            ExitCode::from(f.code)
        }
    }
}
