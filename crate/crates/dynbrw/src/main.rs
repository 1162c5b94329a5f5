//! `dynbrw` command-line interface: one subcommand per experiment kind, each
//! driven by a TOML config file.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dynbrw::config::{ExperimentKind, OutputFormat};
use dynbrw::run::{render, run};
use dynbrw::Error;

#[derive(Parser)]
#[command(name = "dynbrw", version, about = "Dynamical branching random walks on Cayley graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output format from the config.
    #[arg(long, value_parser = parse_format)]
    format: Option<OutputFormat>,
    /// Writes output to this path instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Classifies the regime from the offspring mean and spectral radius.
    Classify(CommonArgs),
    /// Estimates the spectral radius with monotone lower bounds.
    Rho(CommonArgs),
    /// Probes the recurrence series condition.
    Series(CommonArgs),
    /// Samples a Galton-Watson tree.
    Tree(CommonArgs),
    /// Simulates return counts at a fixed level over a time horizon.
    Simulate(CommonArgs),
    /// Estimates the occupation integral at a fixed level.
    Zeta(CommonArgs),
    /// Runs the embedded supercritical process at time zero.
    Embedded(CommonArgs),
    /// Searches for a stability certificate over an epsilon grid.
    Certify(CommonArgs),
    /// Scans segments for exceptional return behaviour across levels.
    Scan(CommonArgs),
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    match s {
        "json" => Ok(OutputFormat::Json),
        "csv" => Ok(OutputFormat::Csv),
        other => Err(format!("unknown format {other:?}; expected json or csv")),
    }
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::Classify(_) => ExperimentKind::Classify,
            Command::Rho(_) => ExperimentKind::Rho,
            Command::Series(_) => ExperimentKind::Series,
            Command::Tree(_) => ExperimentKind::Tree,
            Command::Simulate(_) => ExperimentKind::Simulate,
            Command::Zeta(_) => ExperimentKind::Zeta,
            Command::Embedded(_) => ExperimentKind::Embedded,
            Command::Certify(_) => ExperimentKind::Certify,
            Command::Scan(_) => ExperimentKind::Scan,
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Classify(a)
            | Command::Rho(a)
            | Command::Series(a)
            | Command::Tree(a)
            | Command::Simulate(a)
            | Command::Zeta(a)
            | Command::Embedded(a)
            | Command::Certify(a)
            | Command::Scan(a) => a,
        }
    }
}

fn execute(command: &Command) -> dynbrw::Result<()> {
    let args = command.args();
    let text = std::fs::read_to_string(&args.config)?;
    let mut config = dynbrw::config::parse_config(&text)
        .map_err(|e| rename_config_path(e, &args.config))?;
    if config.kind != command.kind() {
        return Err(Error::config(
            "kind",
            format!(
                "config declares {:?} but the {} subcommand was invoked",
                config.kind.name(),
                command.kind().name()
            ),
        ));
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(format) = args.format {
        config.format = format;
    }
    let output = run(&config)?;
    let text = render(&output, config.format);
    match &args.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Replaces the placeholder document path in parse errors with the real file.
fn rename_config_path(err: Error, path: &std::path::Path) -> Error {
    match err {
        Error::Config { message, .. } => Error::Config {
            path: path.display().to_string(),
            message,
        },
        other => other,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
