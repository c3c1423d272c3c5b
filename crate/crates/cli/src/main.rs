//! `chainlab` command-line runner.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure,
//! 3 a check failed under `--check`.

use anyhow::Context;
use chainlab::experiments::{run, write_outputs, Experiment, ExperimentConfig, Seeds};
use chainlab::ChainError;
use clap::{Args, Parser, Subcommand};
use log::{error, info};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "chainlab", version, about = "Disordered harmonic chain experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    Spectrum,
    Localization,
    ClassicalHydro,
    QuantumHydro,
    ConvergenceSweep,
    EulerSolve,
    MonteCarloCheck,
}

impl Command {
    fn experiment(self) -> Experiment {
        match self {
            Command::Spectrum => Experiment::Spectrum,
            Command::Localization => Experiment::Localization,
            Command::ClassicalHydro => Experiment::ClassicalHydro,
            Command::QuantumHydro => Experiment::QuantumHydro,
            Command::ConvergenceSweep => Experiment::ConvergenceSweep,
            Command::EulerSolve => Experiment::EulerSolve,
            Command::MonteCarloCheck => Experiment::MonteCarloCheck,
        }
    }
}

#[derive(Args, Debug)]
struct Opts {
    /// TOML configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// First seed; the seed count of the config is kept.
    #[arg(long, global = true)]
    seed_base: Option<u64>,
    /// Chain sizes, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Macroscopic times, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    t: Option<Vec<f64>>,
    /// Exit with status 3 if any summary check fails.
    #[arg(long, global = true)]
    check: bool,
}

enum Failure {
    Config(String),
    Numerical(String),
}

fn effective_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.opts.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| Failure::Config(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    cfg.experiment = cli.command.experiment();
    if let Some(out) = &cli.opts.out {
        cfg.output_dir = out.clone();
    }
    if let Some(base) = cli.opts.seed_base {
        cfg.seeds = Seeds::Range {
            base,
            count: cfg.seeds.len(),
        };
    }
    if let Some(n) = &cli.opts.n {
        cfg.n_list = n.clone();
    }
    if let Some(t) = &cli.opts.t {
        cfg.times = t.clone();
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<bool, Failure> {
    let cfg = effective_config(cli)?;
    if let Some(threads) = cli.opts.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("thread pool")
            .map_err(|e| Failure::Config(format!("{e:#}")))?;
    }
    let report = run(&cfg).map_err(|e| match e {
        ChainError::Config(m) => Failure::Config(m),
        other => Failure::Numerical(other.to_string()),
    })?;
    let paths = write_outputs(&report, &cfg.output_dir).map_err(|e| Failure::Numerical(e.to_string()))?;
    info!("wrote {} files under {}", paths.len(), cfg.output_dir.display());
    for (name, ok) in &report.checks {
        println!("{} {name}", if *ok { "PASS" } else { "FAIL" });
    }
    for (name, v) in &report.scalars {
        println!("{name} = {v:.6e}");
    }
    if !report.failures.is_empty() {
        for f in &report.failures {
            error!("{} n = {} seed = {}: {}", f.experiment, f.n, f.seed, f.error);
        }
        return Err(Failure::Numerical(format!("{} cells failed", report.failures.len())));
    }
    Ok(report.all_checks_pass())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) if cli.opts.check => {
            error!("checks failed");
            ExitCode::from(3)
        }
        Ok(false) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            error!("config error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(m)) => {
            error!("numerical failure: {m}");
            ExitCode::from(2)
        }
    }
}
