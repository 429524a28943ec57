//! Command-line interface for the laboratory.
//!
//! Exit status: 0 on success, 1 when a verification criterion fails,
//! 2 on configuration or runtime errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mfglab::lab::{persist, ExperimentConfig, LabContext, SuiteOutcome};
use mfglab::{LabError, Result};

#[derive(Parser)]
#[command(name = "mfglab", version, about = "n-player stochastic differential games with common noise: simulation, mean field equilibria, and convergence experiments")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the [seeds].noise entry of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the [output].dir entry of the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the standing assumptions and the monotonicity condition.
    Validate,
    /// Solve the per-scenario mean field fixed points and save artifacts.
    SolveMfe,
    /// Simulate the constructed profile and export trajectories.
    Simulate,
    /// Nash-gap reports for the constructed equilibria across n.
    NashGap,
    /// Stochastic-exponential and measure-change checks.
    GirsanovCheck,
    /// Empirical SPDE residual scaling in n.
    SpdeScaling,
    /// Forward convergence of the empirical flow to the solved flow.
    Converge,
    /// Shrinking exploitability of the constructed profile.
    Converse,
    /// Run every verification suite.
    VerifyAll,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seeds.noise = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.display().to_string();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<SuiteOutcome> {
    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| LabError::Config(format!("worker pool: {e}")))?;
    }
    let cfg = load_config(&cli)?;
    let out_dir = PathBuf::from(&cfg.output.dir);
    let ctx = LabContext::new(cfg)?;

    let outcome = match cli.command {
        Command::Validate => {
            let outcome = ctx.run_model_suite()?;
            persist(&outcome, &out_dir, "validate")?;
            outcome
        }
        Command::SolveMfe => {
            let sols = ctx.solve_all()?;
            ctx.save_solutions(&sols, &out_dir)?;
            let mut outcome = SuiteOutcome::empty();
            outcome.required_ok = sols.iter().all(|s| s.converged);
            outcome
        }
        Command::Simulate => {
            let sols = ctx.solve_all()?;
            ctx.run_simulate(&sols, &out_dir)?;
            SuiteOutcome::empty()
        }
        Command::NashGap => {
            let sols = ctx.solve_all()?;
            let outcome = ctx.run_converse(&sols)?;
            persist(&outcome, &out_dir, "nash_gap")?;
            outcome
        }
        Command::GirsanovCheck => {
            let outcome = ctx.run_girsanov_suite()?;
            persist(&outcome, &out_dir, "girsanov")?;
            outcome
        }
        Command::SpdeScaling => {
            let outcome = ctx.run_spde_suite()?;
            persist(&outcome, &out_dir, "spde_scaling")?;
            outcome
        }
        Command::Converge => {
            let sols = ctx.solve_all()?;
            let outcome = ctx.run_forward_convergence(&sols)?;
            persist(&outcome, &out_dir, "converge")?;
            outcome
        }
        Command::Converse => {
            let sols = ctx.solve_all()?;
            let outcome = ctx.run_converse(&sols)?;
            persist(&outcome, &out_dir, "converse")?;
            outcome
        }
        Command::VerifyAll => {
            let sols = ctx.solve_all()?;
            ctx.save_solutions(&sols, &out_dir)?;
            let mut outcome = ctx.run_verification_suites(&sols)?;
            outcome.merge(ctx.run_forward_convergence(&sols)?);
            outcome.merge(ctx.run_converse(&sols)?);
            persist(&outcome, &out_dir, "verify_all")?;
            outcome
        }
    };

    for record in &outcome.records {
        if let Some(verdict) = &record.verdict {
            println!(
                "[{}] {} = {:.6e} ({verdict})",
                record.experiment, record.metric, record.value
            );
        }
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) if outcome.required_ok => ExitCode::SUCCESS,
        Ok(_) => {
            eprintln!("one or more required criteria failed");
            ExitCode::from(1)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(u8::try_from(err.exit_code()).unwrap_or(2))
        }
    }
}
