//! `spdc` — command-line frontend for the cavity-SPDC toolkit.
//!
//! Grammar: `spdc <subcommand> (--config <path> | --preset paper)
//! [--seed N] [--out DIR] [per-subcommand flags]`. The default output
//! directory can also be set through the `SPDC_OUT_DIR` environment
//! variable; an explicit `--out` wins.
//!
//! Exit codes: 0 success, 2 configuration/validation error,
//! 3 computational non-convergence or no-solution, 1 unexpected error.

// Validation guards are written `!(x > 0.0)` so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use commands::{CliError, CountsMode, G2Mode};
use config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "spdc",
    version,
    about = "Cavity-enhanced SPDC source simulation and analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Path to a JSON run configuration.
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named built-in configuration (currently: paper).
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Seed override for stochastic commands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for machine-readable artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster-effect analysis: spacing, mode counts, single-mode check.
    Cluster {
        #[command(flatten)]
        common: Common,
    },
    /// Two-photon correlation curves, simulation and fitting.
    G2 {
        #[command(flatten)]
        common: Common,
        /// Evaluate the analytic correlation model (default).
        #[arg(long, conflicts_with = "simulate")]
        analytic: bool,
        /// Run the stochastic time-tag simulation instead.
        #[arg(long)]
        simulate: bool,
        /// Fit the correlation model to the curve or histogram.
        #[arg(long)]
        fit: bool,
    },
    /// Singles/coincidences/CAR over a pump-power sweep.
    Counts {
        #[command(flatten)]
        common: Common,
        /// Comma-separated pump powers in mW.
        #[arg(long, value_delimiter = ',', default_value = "50,100,150,200,250,300")]
        powers: Vec<f64>,
        /// Emit noise-free expectations instead of sampled counts.
        #[arg(long)]
        expected: bool,
    },
    /// Michelson visibility-versus-path-difference series and fit.
    Michelson {
        #[command(flatten)]
        common: Common,
        /// Comma-separated path differences in meters.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0,0.025,0.05,0.075,0.1,0.125,0.15,0.175,0.2,0.225,0.25"
        )]
        path_diffs: Vec<f64>,
        /// Fit the visibility-decay model and report the linewidth.
        #[arg(long)]
        fit: bool,
        /// Relative multiplicative noise level on the synthetic series.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Poling-period solve and parametric gain envelope.
    Qpm {
        #[command(flatten)]
        common: Common,
        /// Quasi-phase-matching order (positive odd integer).
        #[arg(long, default_value_t = 1)]
        order: i32,
    },
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf, u64), CliError> {
    let config = match (&common.config, common.preset.as_deref()) {
        (Some(path), None) => RunConfig::from_file(path).map_err(CliError::Config)?,
        (None, Some("paper")) => RunConfig::paper_preset().map_err(CliError::Config)?,
        (None, Some(other)) => {
            return Err(CliError::Config(format!("unknown preset '{other}'")));
        }
        (None, None) => {
            return Err(CliError::Config(
                "either --config <path> or --preset paper is required".into(),
            ));
        }
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };
    let out_dir = common
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .or_else(|| std::env::var_os("SPDC_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Internal(format!("cannot create {}: {e}", out_dir.display())))?;
    let seed = common.seed.unwrap_or(config.simulation.seed);
    Ok((config, out_dir, seed))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Cluster { common } => {
            let (config, out_dir, _) = load(&common)?;
            commands::cmd_cluster(&config, &out_dir)
        }
        Command::G2 {
            common,
            analytic: _,
            simulate,
            fit,
        } => {
            let (config, out_dir, seed) = load(&common)?;
            let mode = if simulate {
                G2Mode::Simulate
            } else {
                G2Mode::Analytic
            };
            commands::cmd_g2(&config, &out_dir, mode, fit, seed)
        }
        Command::Counts {
            common,
            powers,
            expected,
        } => {
            let (config, out_dir, seed) = load(&common)?;
            let mode = if expected {
                CountsMode::Expected
            } else {
                CountsMode::Sampled
            };
            commands::cmd_counts(&config, &out_dir, &powers, mode, seed)
        }
        Command::Michelson {
            common,
            path_diffs,
            fit,
            noise,
        } => {
            let (config, out_dir, seed) = load(&common)?;
            commands::cmd_michelson(&config, &out_dir, &path_diffs, fit, noise, seed)
        }
        Command::Qpm { common, order } => {
            let (config, out_dir, _) = load(&common)?;
            commands::cmd_qpm(&config, &out_dir, order)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
