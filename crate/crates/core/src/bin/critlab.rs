use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use critlab::cli::{self, Report};

/// Self-tuning to a bifurcation point: neural integrator and hair-cell oscillator.
#[derive(Debug, Parser)]
#[command(name = "critlab", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate x' = (mu - mu0) x, mu' = f(x) - g(mu), optionally with saccades.
    SimulateIntegrator {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Integrate the adaptive hair-cell oscillator and compare with harmonic balance.
    SimulateOscillator {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep law parameters around a driven integrator configuration.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long, env = "CRITLAB_THREADS")]
        threads: Option<usize>,
    },
    /// Check that the law is compatible with the saccade schedule.
    CheckCompat {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = match &args.command {
        Command::SimulateIntegrator { config, out } => cli::simulate_integrator(config, out),
        Command::SimulateOscillator { config, out } => cli::simulate_oscillator_cmd(config, out),
        Command::Sweep {
            config,
            out,
            threads,
        } => {
            if *threads == Some(0) {
                Err(critlab::Error::Config("--threads must be >= 1".into()))
            } else {
                cli::sweep_cmd(config, out, *threads)
            }
        }
        Command::CheckCompat { config, out } => cli::check_compat(config, out.as_deref()),
    };
    match result {
        Ok(Report { lines, code }) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("{}", cli::error_line(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
