use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use landau_cli::{dispatch, thread_count, with_threads, Command, RunConfig};
use landau_core::engine::Mode;
use landau_core::Error;

#[derive(Parser)]
#[command(name = "landau-tagged", version, about = "Tagged particle in a weakly coupled free gas")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (falls back to LANDAU_TAGGED_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Run an ensemble and write trajectory samples and interaction events.
    Simulate,
    /// Tabulate the transport coefficients and check their identities.
    Coeffs,
    /// Sample the limiting diffusion.
    Sde,
    /// Compare an ensemble with the diffusion at one density.
    Validate,
    /// Twin runs with one particle removed.
    Twin,
    /// Check the linear Grönwall estimates.
    Bounds,
    /// Run the density sweep and write one combined report.
    Sweep,
}

#[derive(ValueEnum, Clone, Copy)]
enum ModeArg {
    Full,
    Reservoir,
}

fn command(s: Sub) -> Command {
    match s {
        Sub::Simulate => Command::Simulate,
        Sub::Coeffs => Command::Coeffs,
        Sub::Sde => Command::Sde,
        Sub::Validate => Command::Validate,
        Sub::Twin => Command::Twin,
        Sub::Bounds => Command::Bounds,
        Sub::Sweep => Command::Sweep,
    }
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidParameter { .. } | Error::Config(_) => "config",
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => "io",
        _ => "runtime",
    }
}

fn run(cli: &Cli) -> Result<bool, Error> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(m) = cli.mode {
        cfg.mode = match m {
            ModeArg::Full => Mode::FullTorus,
            ModeArg::Reservoir => Mode::Reservoir,
        };
    }
    cfg.validate()?;
    let threads = thread_count(cli.threads)?;
    let outcome = with_threads(threads, || dispatch(command(cli.command), &cfg, &cli.out))??;
    for f in &outcome.files {
        println!("{}", f.display());
    }
    Ok(outcome.all_pass.unwrap_or(true))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("{}", json!({"status": "checks_failed"}));
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("{}", json!({"status": "error", "kind": kind(&e), "message": e.to_string()}));
            ExitCode::from(2)
        }
    }
}
