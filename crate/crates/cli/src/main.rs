// Copyright 2026 The nmjumps Authors
// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use nmjumps_cli::commands::{self, Command, Figure};
use nmjumps_cli::config::{ConfigFile, Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "nmjumps",
    version,
    about = "Non-Markovian quantum jump simulations"
)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Model JSON file, or `tls` for the built-in two-level model.
    #[arg(long, global = true)]
    model: Option<String>,
    /// Output directory.
    #[arg(long, global = true, env = "NMJUMPS_OUT")]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of trajectories.
    #[arg(long, global = true)]
    traj: Option<usize>,
    #[arg(long, global = true)]
    tmax: Option<f64>,
    /// Integration step.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Worker threads (defaults to available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Check the rate symmetry and write the certificate.
    Validate,
    /// Tabulate the reduced no-click propagator.
    Propagator,
    /// Sample trajectories and their ensemble average.
    Trajectories,
    /// Integrate the memory master equation.
    Master,
    /// Jump-number probabilities p_n(t).
    Stats,
    /// Datasets for the two-level example.
    Figures {
        #[arg(value_enum)]
        which: Which,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Which {
    Fig1,
    Fig2,
    Fig3,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<bool> {
    let cli = Cli::parse();
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let flags = Overrides {
        model: cli.model,
        out: cli.out,
        seed: cli.seed,
        trajectories: cli.traj,
        t_max: cli.tmax,
        dt: cli.dt,
        workers: cli.workers,
    };
    let cfg = RunConfig::resolve(file, flags, PathBuf::from("nmjumps-out"))?;
    if let Some(n) = cfg.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker pool")?;
    }
    let cmd = match cli.command {
        Cmd::Validate => Command::Validate,
        Cmd::Propagator => Command::Propagator,
        Cmd::Trajectories => Command::Trajectories,
        Cmd::Master => Command::Master,
        Cmd::Stats => Command::Stats,
        Cmd::Figures { which } => Command::Figures(match which {
            Which::Fig1 => Figure::Fig1,
            Which::Fig2 => Figure::Fig2,
            Which::Fig3 => Figure::Fig3,
        }),
    };
    let manifest = commands::run(cmd, &cfg)?;
    for c in manifest.failed_checks() {
        eprintln!(
            "check failed: {} = {:.3e} (threshold {:.3e})",
            c.name, c.value, c.threshold
        );
    }
    Ok(manifest.passed)
}
