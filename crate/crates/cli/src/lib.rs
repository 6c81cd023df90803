//! Command-line laboratory: forward solves, response assembly, identity
//! checks, the counterexample construction and inversion.

pub mod commands;
pub mod config;
pub mod output;
pub mod plot;

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::RunContext;
use crate::config::RunConfig;
use crate::output::RunDir;

#[derive(Debug, Parser)]
#[command(name = "fraclab", version, about = "Fractional exterior-to-boundary response laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Also write SVG inspection plots.
    #[arg(long, global = true)]
    pub plot: bool,
    /// Overrides the inversion and counterexample seeds.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Exterior-data solves for every source, with an oracle certificate.
    Forward,
    /// Synthetic response matrix on the measurement arc (CSV plus JSON sidecar).
    Respond,
    /// Reconstruct q from a `respond` artifact pair.
    Invert,
    /// Identity and construction checks with a CSV summary.
    Verify,
    /// Lack-of-injectivity construction.
    Counterexample,
    /// Closed-form Green kernel table.
    Kernels,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Forward => "forward",
            Self::Respond => "respond",
            Self::Invert => "invert",
            Self::Verify => "verify",
            Self::Counterexample => "counterexample",
            Self::Kernels => "kernels",
        }
    }
}

#[derive(Debug)]
pub enum Failure {
    /// Bad configuration or missing inputs; exit code 2.
    Config(String),
    /// A solver or check failed after writing what it could; exit code 1.
    Numerical(String),
}

impl Failure {
    pub fn io(e: anyhow::Error) -> Self {
        Self::Numerical(format!("{e:#}"))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Numerical(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "{m}"),
            Self::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

/// Resolves the configuration: file (or defaults), then flag overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", path.display())))?;
            RunConfig::parse(&text).map_err(|e| Failure::Config(e.to_string()))?
        }
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        config.inversion.seed = seed;
        config.counterexample.seed = seed;
    }
    Ok(config)
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let config = resolve_config(cli)?;
    let out = RunDir::create(&config.output_dir).map_err(Failure::io)?;
    out.write("config.json", &(config.to_json() + "\n")).map_err(Failure::io)?;
    let ctx = RunContext {
        config: &config,
        out: &out,
        plot: cli.plot,
    };
    match cli.command {
        Command::Forward => commands::forward(&ctx),
        Command::Respond => commands::respond(&ctx),
        Command::Invert => commands::invert(&ctx),
        Command::Verify => commands::verify(&ctx),
        Command::Counterexample => commands::counterexample(&ctx),
        Command::Kernels => commands::kernels(&ctx),
    }
}
