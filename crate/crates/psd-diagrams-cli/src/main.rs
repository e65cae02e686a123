use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use psd_diagrams::commands::{self, exit_code, Fixture, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK};
use psd_diagrams::{PsdError, RunConfig};

/// Retarded cut expansions and positive self-energy approximations for small fermion systems.
#[derive(Parser)]
#[command(name = "psd-diagrams", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the retarded cuts of the configured diagrams and write DOT files.
    Expand {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Write rate-function and spectral-function CSVs with a PSD verdict.
    Spectra {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Replace the configured series by a test fixture (`non-psd`).
        #[arg(long)]
        fixture: Option<String>,
    },
    /// Run the continuation, gluing, FDT and adjoint checks.
    Check {
        config: PathBuf,
        /// Run a single check.
        #[arg(long)]
        check: Option<String>,
        /// Repeat every check at η, η/2 and η/4.
        #[arg(long)]
        eta_sweep: bool,
    },
    /// Exact-diagonalization reference spectra and weak-coupling tables.
    Oracle {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn load(path: &PathBuf, output_dir: Option<PathBuf>) -> Result<RunConfig, i32> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        EXIT_CONFIG
    })?;
    let mut cfg: RunConfig = text.parse().map_err(|e: PsdError| {
        eprintln!("error: {}: {e}", path.display());
        EXIT_CONFIG
    })?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    Ok(cfg)
}

fn fail(e: PsdError) -> i32 {
    eprintln!("error: {e}");
    exit_code(&e)
}

fn run(cli: Cli) -> Result<(), i32> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Expand { config, output_dir } => {
            let cfg = load(&config, output_dir)?;
            commands::cmd_expand(&cfg, &mut out).map_err(fail)?;
        }
        Command::Spectra { config, output_dir, fixture } => {
            let cfg = load(&config, output_dir)?;
            let fixture = fixture.map(|f| f.parse::<Fixture>()).transpose().map_err(fail)?;
            commands::cmd_spectra(&cfg, fixture, &mut out).map_err(fail)?;
        }
        Command::Check { config, check, eta_sweep } => {
            let cfg = load(&config, None)?;
            let results = commands::cmd_check(&cfg, check.as_deref(), eta_sweep, &mut out).map_err(fail)?;
            if !results.iter().all(|r| r.pass()) {
                return Err(EXIT_NUMERIC);
            }
        }
        Command::Oracle { config, output_dir } => {
            let cfg = load(&config, output_dir)?;
            commands::cmd_oracle(&cfg, &mut out).map_err(fail)?;
        }
    }
    out.flush().map_err(|_| EXIT_NUMERIC)?;
    Ok(())
}

fn main() -> ExitCode {
    let code = match run(Cli::parse()) {
        Ok(()) => EXIT_OK,
        Err(c) => c,
    };
    ExitCode::from(code as u8)
}
