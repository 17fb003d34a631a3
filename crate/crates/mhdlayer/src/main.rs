//! Command-line entry point.
//!
//! `mhdlayer <experiment> --config <file> [--out <dir>] [--seed N] [--jobs K]`
//!
//! Exit codes: 0 when every verdict of the run passes, 2 when the run
//! completes but a rate or invariant verdict fails, 1 on execution errors
//! (unreadable or mismatched config, invalid parameters, solver failure).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use mhdlayer::config::{parse_config, ExperimentConfig};
use mhdlayer::harness::run_experiment;
use mhdlayer::{par, Error, Result};

/// Wall-layer and vanishing-diffusivity experiments for the channel system.
#[derive(Parser)]
#[command(name = "mhdlayer", version, about)]
struct Cli {
    /// Experiment to run; must match the config's `experiment` field.
    /// One of: correctors, layer-scaling, simulate, inviscid-limit,
    /// diffusion-limit, budget, betas.
    experiment: String,

    /// Path to a JSON experiment config.
    #[arg(long)]
    config: PathBuf,

    /// Output directory (default: the config's `output_dir`, else
    /// `runs/<experiment>`).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Override the config's RNG seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads for the per-ε fan-out; 0 uses the library default.
    /// The MHDLAYER_JOBS environment variable takes precedence.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {}: {e}", cli.experiment);
            ExitCode::from(1)
        }
    }
}

fn execute(cli: &Cli) -> Result<bool> {
    let text = std::fs::read_to_string(&cli.config)?;
    let mut cfg: ExperimentConfig = parse_config(&text)?;
    if cfg.experiment.name() != cli.experiment {
        return Err(Error::config(
            "experiment",
            format!(
                "config describes `{}` but the command line asked for `{}`",
                cfg.experiment.name(),
                cli.experiment
            ),
        ));
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(cfg.experiment.name()));
    let jobs = std::env::var("MHDLAYER_JOBS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .unwrap_or(cli.jobs);

    let outcome = par::with_jobs(jobs, || run_experiment(&cfg, &out))?;
    println!(
        "{}: {} ({:.2}s, artifacts in {})",
        cfg.experiment.name(),
        if outcome.passed { "pass" } else { "FAIL" },
        outcome.manifest.wall_clock_seconds,
        out.display()
    );
    Ok(outcome.passed)
}
