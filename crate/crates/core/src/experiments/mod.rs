//! Reproducible experiment runs: configuration, `(n, seed)` sweeps, reports and plots.

mod config;
mod pipelines;
mod plots;
mod report;

pub use config::{Experiment, ExperimentConfig, Seeds};
pub use pipelines::{CLASSICAL_RATIO, QUANTUM_RATIO, WICK_PAIRS};
pub use plots::{build_plots, emit_plots, Plot, Series};
pub use report::{
    aggregate_rows, markov_bound, CellFailure, ConvergenceReport, DecayCurve, FitSummary, Overlay, Row, ALL_SEEDS,
};

use crate::error::Result;
use log::info;
use std::path::{Path, PathBuf};

/// Executes the configured pipeline. Cell errors end up in `report.failures`;
/// errors before any cell runs (configuration, macroscopic setup) are returned.
pub fn run(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    let mut report = ConvergenceReport::new(config);
    info!("running {} (config {})", report.experiment, &report.config_hash[..12]);
    match config.experiment {
        Experiment::Spectrum => pipelines::run_spectrum(config, &mut report),
        Experiment::Localization => pipelines::run_localization(config, &mut report),
        Experiment::ClassicalHydro => pipelines::run_classical_hydro(config, &mut report)?,
        Experiment::QuantumHydro => pipelines::run_quantum_hydro(config, &mut report)?,
        Experiment::ConvergenceSweep => {
            pipelines::run_classical_hydro(config, &mut report)?;
            pipelines::run_quantum_hydro(config, &mut report)?;
        }
        Experiment::EulerSolve => pipelines::run_euler(config, &mut report)?,
        Experiment::MonteCarloCheck => pipelines::run_monte_carlo(config, &mut report)?,
    }
    Ok(report)
}

/// Writes `report.csv`, `summary.json`, macroscopic field CSVs and the plots
/// under `dir`. Returns the written paths.
pub fn write_outputs(report: &ConvergenceReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    let csv = dir.join("report.csv");
    report.write_csv(std::io::BufWriter::new(std::fs::File::create(&csv)?))?;
    paths.push(csv);
    let json = dir.join("summary.json");
    report.write_json(std::io::BufWriter::new(std::fs::File::create(&json)?))?;
    paths.push(json);
    for f in &report.fields {
        let p = dir.join(format!("euler_t={}.csv", f.t));
        f.write_csv(std::io::BufWriter::new(std::fs::File::create(&p)?))?;
        paths.push(p);
    }
    paths.extend(emit_plots(report, &dir.join("plots"))?);
    Ok(paths)
}
