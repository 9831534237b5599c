//! Batch front end for the p-adic transition-network solvers.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ultranet::Convention;

use config::Loaded;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Missing input or unwritable output.
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] ultranet::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use ultranet::Error as E;
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Core(E::Numeric(_) | E::Unsupported(_)) => 3,
            CliError::Core(_) => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "ultranet",
    version,
    about = "Master equations on p-adic transition networks"
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for emitted files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the Lambda convention of the config (paper or derived).
    #[arg(long, global = true)]
    convention: Option<Convention>,
    /// Size of the worker pool for parallel sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print the config with every default filled in, then exit.
    #[arg(long, global = true)]
    dump_normalized_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Split basins into G1/G2 and classify the Lambda semigroup.
    Classify,
    /// Cell densities over the time grid plus the decay-rate table.
    Solve,
    /// First time the density reaches the threshold.
    Tau,
    /// Spectral solution against the discretized generator.
    Oracle,
    /// Monte Carlo estimates on the discretized state space.
    Simulate,
    /// Two-basin folding scenario report.
    FoldingDemo,
}

fn run(cli: &Cli) -> Result<String, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let shown = path.display().to_string();
    let source =
        std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{shown}: {e}")))?;
    let mut loaded = Loaded::parse(&shown, source)?;
    if let Some(c) = cli.convention {
        loaded.apply_convention(c);
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    if cli.dump_normalized_config {
        let c = loaded.normalized()?;
        return toml::to_string(&c)
            .map_err(|e| CliError::Config(format!("cannot serialize config: {e}")));
    }
    let out = &cli.out;
    match cli.command {
        None => Err(CliError::Config(
            "a subcommand is required (see --help)".into(),
        )),
        Some(Command::Classify) => commands::classify(&loaded, out),
        Some(Command::Solve) => commands::solve(&loaded, out),
        Some(Command::Tau) => commands::tau(&loaded, out),
        Some(Command::Oracle) => commands::oracle(&loaded, out),
        Some(Command::Simulate) => commands::simulate_cmd(&loaded, out),
        Some(Command::FoldingDemo) => commands::folding_demo(&loaded, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(s) => {
            print!("{s}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
