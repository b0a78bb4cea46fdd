use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use kolmolab::config::{BatteryName, ExperimentConfig};
use kolmolab::runner::{self, Stage};
use kolmolab::Error;

/// Desk-scale laboratory for elliptic Kolmogorov operators with singular
/// divergence-free-type drifts.
///
/// Exit codes: 0 success, 1 error, 2 theory-hypothesis refusal
/// (nu_+ >= 2 sigma), 3 completed with findings.
#[derive(Parser)]
#[command(name = "kolmolab", version, about)]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the grid resolution per axis.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Battery name for `verify`.
    #[arg(long, global = true)]
    battery: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate form-bound constants of the configured drift (CSV report).
    Formbound,
    /// Verify the smooth-approximation properties along the schedule.
    Mollify,
    /// Solve the Dirichlet problem on the raw coefficients.
    Solve,
    /// Run the mollify-and-solve approximation scheme.
    Approx,
    /// Run one named regularity battery on the scheme's final solution.
    Verify,
    /// Full pipeline: formbound, mollify, approx, all configured batteries.
    Run,
    /// Write gnuplot scripts next to the CSV reports in --out.
    EmitPlots,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .context("--config PATH is required for this subcommand")?;
    let mut config = ExperimentConfig::load(path)
        .with_context(|| format!("loading {}", path.display()))?;
    if let Some(n) = cli.grid {
        config.domain.resolution = n;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    kolmolab::init_threads();
    let cli = Cli::parse();

    let stage = match &cli.command {
        Command::Formbound => Stage::Formbound,
        Command::Mollify => Stage::Mollify,
        Command::Solve => Stage::Solve,
        Command::Approx => Stage::Approx,
        Command::Run => Stage::Full,
        Command::Verify => {
            let name = cli.battery.as_deref().unwrap_or("all");
            match BatteryName::parse(name) {
                Ok(b) => Stage::Verify(b),
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            }
        }
        Command::EmitPlots => {
            let dir = match (&cli.out, &cli.config) {
                (Some(out), _) => out.clone(),
                (None, Some(_)) => match load_config(&cli) {
                    Ok(c) => c.output_dir,
                    Err(e) => {
                        eprintln!("error: {e:#}");
                        return ExitCode::from(1);
                    }
                },
                (None, None) => {
                    eprintln!("error: emit-plots needs --out DIR (or --config)");
                    return ExitCode::from(1);
                }
            };
            return match runner::emit_plots(&dir) {
                Ok(scripts) => {
                    for s in scripts {
                        println!("{}", s.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            };
        }
    };

    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    match runner::run_stage(&config, stage) {
        Ok(outcome) => {
            for artifact in &outcome.artifacts {
                println!("wrote {}", artifact.display());
            }
            if outcome.findings.is_empty() {
                ExitCode::SUCCESS
            } else {
                for finding in &outcome.findings {
                    eprintln!("finding: {finding}");
                }
                ExitCode::from(3)
            }
        }
        Err(e @ Error::HypothesisViolated { .. }) => {
            eprintln!("refused: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
