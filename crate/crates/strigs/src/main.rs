use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use strigs::config::parse_config;
use strigs::error::Error;
use strigs::pipeline;

/// Simulation lab for Tikhonov-regularized inertial gradient dynamics.
#[derive(Parser)]
#[command(name = "strigs", version, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set eps.r=0.5 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Override output_dir from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and write checkpoint states.
    Simulate(Common),
    /// Run a seeded ensemble; write metric means/SEs and the energy bound.
    Ensemble(Common),
    /// Fit decay exponents of the metrics against their expected rates.
    Rates {
        #[command(flatten)]
        common: Common,
        /// Exit with status 3 if any fitted rate misses its expected slope.
        #[arg(long)]
        assert: bool,
    },
    /// Lyapunov energy diagnostics along one trajectory.
    Energy(Common),
    /// Regularization path over the checkpoint grid.
    Path(Common),
    /// Print the parameter window, chosen t1, and the margin table.
    CheckParams(Common),
    /// Run the baseline systems on identical noise and tabulate.
    Compare(Common),
}

fn resolve(common: &Common) -> Result<strigs::config::Resolved, Error> {
    let mut cfg = parse_config(common.config.as_deref(), &common.sets)?;
    if let Some(out) = &common.out {
        cfg.output_dir = out.display().to_string();
    }
    cfg.resolve()
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(c) => pipeline::simulate(&resolve(&c)?),
        Command::Ensemble(c) => pipeline::ensemble(&resolve(&c)?),
        Command::Rates { common, assert } => pipeline::rates(&resolve(&common)?, assert),
        Command::Energy(c) => pipeline::energy_cmd(&resolve(&c)?),
        Command::Path(c) => pipeline::path_cmd(&resolve(&c)?),
        Command::CheckParams(c) => {
            print!("{}", pipeline::check_params(&resolve(&c)?)?);
            Ok(())
        }
        Command::Compare(c) => {
            print!("{}", pipeline::compare(&resolve(&c)?)?);
            Ok(())
        }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::InvalidParam(_)
        | Error::Infeasible(_)
        | Error::DimensionMismatch(_)
        | Error::UnsupportedSchedule(_) => 2,
        Error::CheckFailed(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    if let Ok(n) = std::env::var("STRIGS_WORKERS") {
        if let Ok(n) = n.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                _ => {
                    // Usage errors (unknown subcommand, bad flags).
                    eprint!("{e}");
                    ExitCode::from(64)
                }
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
