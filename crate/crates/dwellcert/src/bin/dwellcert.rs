//! Thin command-line wrapper over the library's batch operations.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dwellcert::cli;

#[derive(Parser)]
#[command(
    name = "dwellcert",
    about = "Lyapunov certificates, dwell-time bounds and upwind simulation \
             for switched 1-D linear hyperbolic systems"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// Seed for generated switching signals.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Parallel workers for sweeps.
    #[arg(long, global = true, default_value_t = 4)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Search for a stability certificate.
    Certify {
        #[arg(long)]
        config: PathBuf,
        /// Override the scenario's variant (e.g. common-sign-fixed).
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search for a dwell certificate and print the bound.
    DwellBound {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the switched system and fit the decay rate.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write an SVG plot of the norm (and Lyapunov) trace.
        #[arg(long)]
        plot: bool,
    },
    /// Simulate over a range of switching periods.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Test membership in the average-dwell-time class.
    ValidateSignal {
        /// Signal JSON file.
        signal: PathBuf,
        #[arg(long)]
        tau_d: f64,
        #[arg(long, default_value_t = 0)]
        n0: usize,
    },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = match &args.command {
        Command::Certify {
            config,
            variant,
            out,
        } => cli::cmd_certify(config, variant.as_deref(), out.as_deref()),
        Command::DwellBound {
            config,
            variant,
            out,
        } => cli::cmd_dwell_bound(config, variant.as_deref(), out.as_deref()),
        Command::Simulate { config, out, plot } => {
            cli::cmd_simulate(config, out.as_deref(), args.seed, *plot)
        }
        Command::Sweep { config, out } => {
            cli::cmd_sweep(config, out.as_deref(), args.seed, args.jobs)
        }
        Command::ValidateSignal { signal, tau_d, n0 } => {
            cli::cmd_validate_signal(signal, *tau_d, *n0)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
