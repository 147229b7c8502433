//! `pcq`: config-driven runner for solves, optimization and optimality checks.
//!
//! Exit codes: 0 when the command ran and its verdict holds, 2 when it ran
//! but the verdict is false, 1 when it could not run (bad config, solver
//! failure, non-convergence).

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use pcq_core::config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "pcq", version, about = "Optimal control of quasilinear elliptic equations with PC² diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Increase log verbosity (-v: per-iteration lines, -vv: debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the state equation for the configured control.
    Solve(Common),
    /// Run the projected gradient method from the configured control.
    Optimize(Common),
    /// Stationarity residual and Pontryagin gap at the configured control.
    CheckFoc(Common),
    /// Optimize, then evaluate the curvature functionals on sampled critical directions.
    CheckSoc(Common),
    /// Band-width sweep of the jump functional for the state of the configured control.
    Sigma(Common),
    /// Optimize, then tabulate the second-order expansion residual against perturbation size.
    TaylorCheck(Common),
    /// Compare adjoint directional derivatives with central differences.
    GradientCheck(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides `soc.seed` and seeds the random directions of the checks.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `domain.resolution`.
    #[arg(long)]
    resolution: Option<usize>,
}

/// What a command concluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    VerdictFalse,
    Failed,
}

impl From<Outcome> for ExitCode {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::Pass => ExitCode::SUCCESS,
            Outcome::VerdictFalse => ExitCode::from(2),
            Outcome::Failed => ExitCode::from(1),
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    let (name, common) = match &cli.command {
        Command::Solve(c) => ("solve", c),
        Command::Optimize(c) => ("optimize", c),
        Command::CheckFoc(c) => ("check-foc", c),
        Command::CheckSoc(c) => ("check-soc", c),
        Command::Sigma(c) => ("sigma", c),
        Command::TaylorCheck(c) => ("taylor-check", c),
        Command::GradientCheck(c) => ("gradient-check", c),
    };
    let mut config = ExperimentConfig::load(&common.config)
        .with_context(|| format!("reading config {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        config.soc.seed = seed;
    }
    let base = common.config.parent().map(PathBuf::from).unwrap_or_default();
    let experiment = config.build(&base, common.resolution).context("invalid config")?;
    std::fs::create_dir_all(&common.out)
        .with_context(|| format!("creating output directory {}", common.out.display()))?;
    let out = output::OutDir::new(&common.out);
    out.json("config.json", &config)?;
    log::info!("{name}: {} nodes", experiment.spec.mesh().num_nodes());

    let ctx = commands::Context { experiment: &experiment, out: &out, seed: config.soc.seed };
    match cli.command {
        Command::Solve(_) => commands::solve(&ctx),
        Command::Optimize(_) => commands::optimize(&ctx),
        Command::CheckFoc(_) => commands::check_foc(&ctx),
        Command::CheckSoc(_) => commands::check_soc(&ctx),
        Command::Sigma(_) => commands::sigma(&ctx),
        Command::TaylorCheck(_) => commands::taylor_check(&ctx),
        Command::GradientCheck(_) => commands::gradient_check(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match run(cli) {
        Ok(outcome) => outcome.into(),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
