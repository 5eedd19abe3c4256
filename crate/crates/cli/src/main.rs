//! `tentspace` command-line driver.
//!
//! Exit codes: 0 on success, 2 when a checked invariant fails, 3 for bad
//! configuration or input.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tentspace::corpus::FieldKind;
use tentspace::halfspace::GridParams;
use tentspace::NormedSpace;

use config::{parse_grid, parse_number, parse_space, Format, Overrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Core(#[from] tentspace::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use tentspace::Error as E;
        match self {
            CliError::Invariant(_) | CliError::Core(E::Invariant(_) | E::SupportLeak { .. }) => 2,
            _ => 3,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "tentspace", version, about = "Tent-space computations on discretized upper half-spaces")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// JSON config file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Grid as n,L,h,T,J (fractions like 1/16 allowed).
    #[arg(long, global = true, value_parser = parse_grid)]
    grid: Option<GridParams>,
    /// Value space as d,norm with norm euclidean, max or p<exponent>.
    #[arg(long, global = true, value_parser = parse_space)]
    space: Option<NormedSpace>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo sample count.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded corpus of grid functions and a manifest.
    Generate {
        #[arg(long, default_value_t = 50)]
        count: usize,
        /// Comma-separated subset of impulse, tent_field, atom, smooth_profile.
        #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
        kinds: Vec<FieldKind>,
        /// Store values in little-endian f64 sidecars.
        #[arg(long)]
        binary: bool,
    },
    /// Tent norms of one grid function.
    Norms {
        #[arg(long)]
        input: PathBuf,
        /// Exponents; `inf` selects the T-infinity norm.
        #[arg(long, default_value = "1,2", value_delimiter = ',', value_parser = parse_number)]
        p: Vec<f64>,
        /// Cone apertures.
        #[arg(long, default_value = "1", value_delimiter = ',', value_parser = parse_number)]
        alpha: Vec<f64>,
    },
    /// Atomic decomposition with its verification report.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        binary: bool,
    },
    /// Sampled checks of the covering and maximal-function lemmas.
    VerifyLemmas {
        /// Number of random open sets.
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
}

fn parse_kind(s: &str) -> Result<FieldKind, String> {
    serde_json::from_value(serde_json::Value::String(s.trim().to_string())).map_err(|_| format!("unknown field kind {s:?}"))
}

fn run(cli: Cli) -> Result<String, CliError> {
    let g = cli.global;
    let overrides = Overrides { grid: g.grid, space: g.space, seed: g.seed, samples: g.samples, out: g.out, format: g.format };
    let config = RunConfig::resolve(g.config.as_deref(), overrides)?;
    match cli.command {
        Command::Generate { count, kinds, binary } => {
            let kinds = if kinds.is_empty() { FieldKind::ALL.to_vec() } else { kinds };
            commands::generate(&config, count, &kinds, binary)
        }
        Command::Norms { input, p, alpha } => commands::norms(config, &input, &p, &alpha),
        Command::Decompose { input, binary } => commands::decompose_cmd(config, &input, binary),
        Command::VerifyLemmas { trials } => commands::verify_lemmas(&config, trials),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
