mod commands;
mod config;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

/// Simulate geometric SDEs with jumps, apply random gauge transformations and
/// test invariance of driver laws.
#[derive(Parser, Debug)]
#[command(name = "gaugesde", version)]
struct Cli {
    /// Cap the number of worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct Common {
    /// Override the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (beats the config and GAUGESDE_OUT_DIR).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate driver paths (and an SDE if configured); write CSV and a summary.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Apply the configured gauge transform, invert it and report the round trip.
    Transform {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Deterministic invariance check of a Lévy triplet under the action.
    CheckLevy {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Two-sample invariance experiment: driver versus transformed driver.
    TestInvariance {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Canned experiments; --config takes the demo's own options file.
    Demo {
        name: Demo,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the number of Monte Carlo paths.
        #[arg(long)]
        paths: Option<usize>,
        /// Variant for the nonmarkovian demo.
        #[arg(long, value_enum, default_value_t = Variant::Default)]
        variant: Variant,
        /// Radial drift for the bessel demo.
        #[arg(long, value_enum, default_value_t = Drift::Saturating)]
        drift: Drift,
        #[command(flatten)]
        common: Common,
    },
    /// Print the config JSON schema.
    Schema,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum Demo {
    BmRotation,
    Bessel,
    Nonmarkovian,
    Discrete,
    AlphaStable,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum Variant {
    Default,
    Anisotropic,
    Unmodulated,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum Drift {
    Zero,
    Saturating,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        gaugesde::par::set_threads(n);
    }
    let res = match cli.command {
        Command::Simulate { config, common } => commands::simulate(&config, &common),
        Command::Transform { config, common } => commands::transform(&config, &common),
        Command::CheckLevy { config, common } => commands::check_levy(&config, &common),
        Command::TestInvariance { config, common } => commands::test_invariance(&config, &common),
        Command::Demo { name, config, paths, variant, drift, common } => commands::demo(name, config.as_deref(), paths, variant, drift, &common),
        Command::Schema => {
            print!("{}", commands::SCHEMA);
            Ok(true)
        }
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
