//! Per-experiment pipelines. Each `(n, seed)` cell is independent; a failing
//! cell is recorded and the others go on.

use super::config::{Experiment, ExperimentConfig};
use super::report::{aggregate_rows, markov_bound, CellFailure, ConvergenceReport, DecayCurve, FitSummary, Overlay, Row, ALL_SEEDS};
use crate::chain_model::{build_ap, sample_masses, sample_profiles, DisorderedChain, MassLaw, Profiles};
use crate::classical_state::{local_gibbs_moments, sample_batch, GaussianChainState};
use crate::dynamics::{
    empirical_mean_functional, evolve_covariance, evolve_means, from_modes, quad_var, quad_var_energy, to_modes,
    EvolutionMap, Field,
};
use crate::error::{ChainError, Result};
use crate::euler_macro::{pde_residuals, MacroFlavor, MacroSolver};
use crate::localization::{
    aggregate_correlator, correlator_sample, high_mode_offdiag_mass, min_freq, min_freq_scan, offdiag_less_bound,
    CorrelatorSample, MinFreq,
};
use crate::quantum_state::{quantum_locally_gibbs_with, thermal_energy_profile};
use crate::rng::{self, Domain};
use crate::spectral::{build_spectral_with, load_or_build, Checks, SpectralData, ORTHONORMALITY_TOL, RESIDUAL_TOL};
use crate::stats;
use log::{info, warn};
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Required `value(n_last) / value(n_first)` for the classical quadratic variations and gaps.
pub const CLASSICAL_RATIO: f64 = 0.5;
/// Same for the quantum quadratic variations, which carry the Monte Carlo error of `b_bar`.
pub const QUANTUM_RATIO: f64 = 1.0 / 1.5;
/// Tolerance of the macroscopic targets `int f z dy`.
const TARGET_TOL: f64 = 1e-12;
/// Time step of the PDE residual check.
const RESIDUAL_STEP: f64 = 1e-4;
pub const WICK_PAIRS: usize = 20;
const MC_CHUNK: usize = 5000;

const FIELDS: [Field; 3] = [Field::R, Field::P, Field::E];

fn spectrum(chain: &DisorderedChain, cfg: &ExperimentConfig, checks: Checks) -> Result<SpectralData> {
    match &cfg.cache_dir {
        Some(dir) => load_or_build(dir, chain),
        None => build_spectral_with(chain, checks),
    }
}

/// Runs `cell` on every `(n, seed)` pair in parallel. Output order follows the input order.
fn run_cells<T: Send>(
    cells: &[(usize, u64)],
    cell: impl Fn(usize, u64) -> Result<T> + Sync,
) -> Vec<(usize, u64, Result<T>)> {
    cells
        .par_iter()
        .map(|&(n, seed)| {
            let out = cell(n, seed);
            if let Err(e) = &out {
                warn!("cell n = {n}, seed = {seed} failed: {e}");
            }
            (n, seed, out)
        })
        .collect()
}

fn all_cells(cfg: &ExperimentConfig) -> Vec<(usize, u64)> {
    let seeds = cfg.seeds.list();
    let mut ns = cfg.n_list.clone();
    ns.sort_unstable();
    ns.dedup();
    ns.iter().flat_map(|&n| seeds.iter().map(move |&s| (n, s))).collect()
}

fn failure(experiment: &str, n: usize, seed: impl ToString, e: &ChainError) -> CellFailure {
    CellFailure {
        experiment: experiment.to_string(),
        n,
        seed: seed.to_string(),
        error: e.to_string(),
    }
}

fn fit_key(experiment: &str, metric: &str, f: &str, t: f64) -> String {
    format!("{experiment}/{metric}/{f}/t={t}")
}

/// Fits every aggregated metric accepted by `required` along n.
fn add_fits(report: &mut ConvergenceReport, required: impl Fn(&str, &str) -> Option<Option<f64>>) {
    let mut series: BTreeMap<String, (Vec<usize>, Vec<f64>, Option<f64>)> = BTreeMap::new();
    let mut agg: Vec<&Row> = report.rows.iter().filter(|r| r.seed == ALL_SEEDS).collect();
    agg.sort_by(|a, b| a.n.cmp(&b.n));
    for r in agg {
        if let Some(ratio) = required(&r.experiment, &r.metric) {
            let e = series
                .entry(fit_key(&r.experiment, &r.metric, &r.f, r.t))
                .or_insert_with(|| (Vec::new(), Vec::new(), ratio));
            e.0.push(r.n);
            e.1.push(r.value);
        }
    }
    for (key, (ns, vals, ratio)) in series {
        if ns.len() < 2 {
            continue;
        }
        let fit = FitSummary::from_series(ns, vals, ratio);
        if let Some(p) = fit.pass {
            report.checks.insert(key.clone(), p);
        }
        report.fits.insert(key, fit);
    }
}

pub(super) fn run_spectrum(cfg: &ExperimentConfig, report: &mut ConvergenceReport) {
    let label = Experiment::Spectrum.name();
    let results = run_cells(&all_cells(cfg), |n, seed| {
        let chain = sample_masses(n, cfg.mass_law, seed)?;
        let spec = build_spectral_with(&chain, Checks::None)?;
        let d = spec.diagnostics(&build_ap(&chain), true);
        let total = chain.total_mass();
        let ground = (0..n)
            .map(|x| (spec.phi_p[(x, 0)] - (chain.masses[x] / total).sqrt()).abs())
            .fold(0.0, f64::max);
        let row = |metric: &str, v: f64| Row::new(label, n, seed, 0.0, "-", metric, v);
        Ok(vec![
            row("omega_1", spec.omega[1]),
            row("omega_max", spec.omega[n - 1]),
            row("orthonormality_p", d.orthonormality_p),
            row("orthonormality_r", d.orthonormality_r),
            row("residual_p", d.residual_p),
            row("residual_r", d.residual_r),
            row("completeness", d.completeness),
            row("ground_error", ground),
            row("near_degenerate", spec.near_degenerate.len() as f64),
        ])
    });
    let mut ok = true;
    for (n, seed, res) in results {
        match res {
            Ok(rows) => {
                for r in &rows {
                    let limit = match r.metric.as_str() {
                        "orthonormality_p" | "orthonormality_r" | "completeness" => ORTHONORMALITY_TOL,
                        "residual_p" => RESIDUAL_TOL,
                        "residual_r" => crate::spectral::R_RESIDUAL_TOL,
                        "ground_error" => 1e-11,
                        _ => f64::INFINITY,
                    };
                    ok &= r.value <= limit;
                }
                report.rows.extend(rows);
            }
            Err(e) => report.failures.push(failure(label, n, seed, &e)),
        }
    }
    let agg = aggregate_rows(&report.rows);
    report.rows.extend(agg);
    report.checks.insert("spectrum/structural_checks".into(), ok);
}

pub(super) fn run_localization(cfg: &ExperimentConfig, report: &mut ConvergenceReport) {
    let label = Experiment::Localization.name();
    let alpha = cfg.alpha;
    let gamma = cfg.freq_gamma;
    let f_alpha = format!("alpha={alpha}");
    let f_gamma = format!("gamma={gamma}");
    let results = run_cells(&all_cells(cfg), |n, seed| {
        let chain = sample_masses(n, cfg.mass_law, seed)?;
        let spec = spectrum(&chain, cfg, Checks::Fast)?;
        Ok((correlator_sample(&spec, alpha)?, min_freq(&spec, gamma)?))
    });
    let mut by_n: BTreeMap<usize, Vec<CorrelatorSample>> = BTreeMap::new();
    let mut freqs: Vec<MinFreq> = Vec::new();
    for (n, seed, res) in results {
        match res {
            Ok((sample, mf)) => {
                for (d, v) in sample.distances.iter().zip(&sample.values) {
                    report.rows.push(Row::new(label, n, seed, 0.0, &format!("d={d}"), "correlator", *v));
                }
                report.rows.push(Row::new(label, n, seed, 0.0, &f_alpha, "diag_max", sample.diag_max));
                report.rows.push(Row::new(label, n, seed, 0.0, &f_gamma, "inv_omega_min", mf.inv_omega));
                by_n.entry(n).or_default().push(sample);
                freqs.push(mf);
            }
            Err(e) => report.failures.push(failure(label, n, seed, &e)),
        }
    }
    let agg = aggregate_rows(&report.rows);
    report.rows.extend(agg);

    let curve = |label: &str, scan: &crate::localization::LocalizationScan| DecayCurve {
        label: label.to_string(),
        alpha,
        n: scan.n,
        distances: scan.distances.clone(),
        correlator: scan.correlator.clone(),
        fit_slope: scan.fit.map_or(f64::NAN, |f| f.slope),
        fit_intercept: scan.fit.map_or(f64::NAN, |f| f.intercept),
        fit_r: scan.fit.map_or(f64::NAN, |f| f.r),
        window: scan.window,
    };
    let (lo, _) = cfg.mass_law.support();
    let mut diag_ok = true;
    for (&n, samples) in &by_n {
        match aggregate_correlator(samples, alpha) {
            Ok(scan) => {
                diag_ok &= scan.diag_max <= 1.0 / lo;
                let c = curve("disordered", &scan);
                report.rows.push(Row::new(label, n, ALL_SEEDS, 0.0, &f_alpha, "fit_slope", c.fit_slope));
                report.rows.push(Row::new(label, n, ALL_SEEDS, 0.0, &f_alpha, "fit_r", c.fit_r));
                report.decay.push(c);
            }
            Err(e) => report.failures.push(failure(label, n, ALL_SEEDS, &e)),
        }
    }
    report.checks.insert("localization/diag_bound".into(), diag_ok);

    let mut clean: BTreeMap<usize, DecayCurve> = BTreeMap::new();
    if cfg.clean_control {
        let ns: Vec<usize> = by_n.keys().copied().collect();
        let law = MassLaw::clean(cfg.mass_law.mean());
        let out: Vec<(usize, Result<_>)> = ns
            .par_iter()
            .map(|&n| {
                let res = (|| {
                    let chain = sample_masses(n, law, 0)?;
                    let spec = build_spectral_with(&chain, Checks::Fast)?;
                    aggregate_correlator(&[correlator_sample(&spec, alpha)?], alpha)
                })();
                (n, res)
            })
            .collect();
        for (n, res) in out {
            match res {
                Ok(scan) => {
                    let c = curve("clean", &scan);
                    report.rows.push(Row::new(label, n, "clean", 0.0, &f_alpha, "fit_slope", c.fit_slope));
                    report.rows.push(Row::new(label, n, "clean", 0.0, &f_alpha, "fit_r", c.fit_r));
                    clean.insert(n, c.clone());
                    report.decay.push(c);
                }
                Err(e) => report.failures.push(failure(label, n, "clean", &e)),
            }
        }
    }

    if let Some(c) = report.decay.iter().filter(|c| c.label == "disordered").max_by_key(|c| c.n).cloned() {
        report.scalars.insert("localization/fit_slope".into(), c.fit_slope);
        report.scalars.insert("localization/fit_r".into(), c.fit_r);
        report
            .checks
            .insert("localization/correlator_decay".into(), c.fit_slope < 0.0 && c.fit_r.abs() > 0.9);
        if let Some(cl) = clean.get(&c.n) {
            report.scalars.insert("localization/clean_fit_slope".into(), cl.fit_slope);
            report.scalars.insert("localization/clean_fit_r".into(), cl.fit_r);
            let fails_fit = cl.fit_slope.abs() < 0.1 * c.fit_slope.abs();
            report.checks.insert("localization/clean_control".into(), fails_fit);
        }
    }

    if !freqs.is_empty() {
        match min_freq_scan(&freqs, gamma) {
            Ok(scan) => {
                for &(n, mean, max) in &scan.per_n {
                    report.rows.push(Row::new(label, n, ALL_SEEDS, 0.0, &f_gamma, "inv_omega_max", max));
                    report.rows.push(Row::new(label, n, ALL_SEEDS, 0.0, &f_gamma, "inv_omega_mean", mean));
                }
                report.scalars.insert("localization/min_freq_slope".into(), scan.slope);
                report.scalars.insert("localization/min_freq_proven_exponent".into(), scan.proven_exponent);
                if scan.per_n.len() >= 2 {
                    report.checks.insert("localization/min_freq_slope".into(), scan.slope <= 1.1);
                }
            }
            Err(e) => report.failures.push(failure(label, 0, ALL_SEEDS, &e)),
        }
    }
    add_fits(report, |e, m| (e == label && m == "inv_omega_max").then_some(None));
}

/// Macroscopic targets `int f z dy` indexed by `(time, test function, field)`.
struct Targets {
    values: Vec<f64>,
    n_f: usize,
}

impl Targets {
    fn new(cfg: &ExperimentConfig, solver: &MacroSolver) -> Result<Self> {
        let mut values = Vec::new();
        for &t in &cfg.times {
            for tf in &cfg.test_functions {
                for z in FIELDS {
                    values.push(solver.integrate_against(|y| tf.eval(y), z, t, TARGET_TOL)?);
                }
            }
        }
        Ok(Targets {
            values,
            n_f: cfg.test_functions.len(),
        })
    }

    fn get(&self, ti: usize, fi: usize, zi: usize) -> f64 {
        self.values[(ti * self.n_f + fi) * 3 + zi]
    }
}

/// `(1/w)`-window average of the mean momentum against the macroscopic momentum.
fn momentum_overlay(
    label: &str,
    seed: u64,
    t: f64,
    state: &GaussianChainState,
    solver: &MacroSolver,
) -> Overlay {
    let n = state.n();
    let w = (n / 64).max(1);
    let mut y = Vec::new();
    let mut micro = Vec::new();
    let mut macro_values = Vec::new();
    for start in (0..n).step_by(w) {
        let end = (start + w).min(n);
        let avg = state.mean_p[start..end].iter().sum::<f64>() / (end - start) as f64;
        let yc = (start + end + 1) as f64 / 2.0 / n as f64;
        y.push(yc);
        micro.push(avg);
        macro_values.push(solver.eval(yc, t).1);
    }
    Overlay {
        experiment: label.to_string(),
        n,
        seed,
        t,
        field: "p".into(),
        y,
        micro,
        macro_values,
    }
}

struct HydroSetup<'a> {
    cfg: &'a ExperimentConfig,
    profiles: &'a Profiles,
    solver: &'a MacroSolver,
    targets: &'a Targets,
    quantum: bool,
    overlay_cell: (usize, u64),
}

fn hydro_cell(s: &HydroSetup, n: usize, seed: u64) -> Result<(Vec<Row>, Vec<Overlay>)> {
    let cfg = s.cfg;
    let label = if s.quantum {
        Experiment::QuantumHydro.name()
    } else {
        Experiment::ClassicalHydro.name()
    };
    let chain = sample_masses(n, cfg.mass_law, seed)?;
    let spec = spectrum(&chain, cfg, Checks::Fast)?;
    let mut rows = Vec::new();
    let mut overlays = Vec::new();
    let state0 = if s.quantum {
        let q = quantum_locally_gibbs_with(&chain, s.profiles, Checks::Fast)?;
        rows.push(Row::new(label, n, seed, 0.0, "-", "epsilon", q.epsilon));
        q.state
    } else {
        local_gibbs_moments(&chain, s.profiles)
    };
    let mc0 = to_modes(&state0, &spec);
    for (ti, &t) in cfg.times.iter().enumerate() {
        let map = EvolutionMap::at_macro_time(&spec, t);
        let (mean_r, mean_p) = evolve_means(&state0, &map)?;
        let mc = mc0.rotate(&map);
        let (sym, imag) = from_modes(&mc, &spec);
        let st = GaussianChainState {
            mean_r,
            mean_p,
            sym,
            imag,
            flavor: state0.flavor,
        };
        for (fi, tf) in cfg.test_functions.iter().enumerate() {
            let f = |y: f64| tf.eval(y);
            for (zi, z) in FIELDS.iter().enumerate() {
                let gap = empirical_mean_functional(f, *z, &st, &chain.masses) - s.targets.get(ti, fi, zi);
                let qv = match z {
                    Field::E => quad_var_energy(f, &st, &chain.masses)?,
                    _ => quad_var(f, *z, &st)?,
                };
                let zn = z.name();
                let row = |m: String, v: f64| Row::new(label, n, seed, t, tf.name(), &m, v);
                rows.push(row(format!("gap_{zn}"), gap));
                rows.push(row(format!("abs_gap_{zn}"), gap.abs()));
                rows.push(row(format!("quadvar_{zn}"), qv));
                rows.push(row(format!("mse_{zn}"), qv + gap * gap));
            }
        }
        if cfg.offdiag {
            let od = high_mode_offdiag_mass(&mc, &spec, cfg.gamma, cfg.theta)?;
            let f = format!("theta={}", cfg.theta);
            rows.push(Row::new(label, n, seed, t, &f, "u_less", od.less));
            rows.push(Row::new(label, n, seed, t, &f, "u_greater", od.greater));
            let bound = offdiag_less_bound(n, cfg.theta, s.profiles.beta_minus());
            rows.push(Row::new(label, n, seed, t, &f, "u_less_bound", bound));
        }
        if (n, seed) == s.overlay_cell {
            overlays.push(momentum_overlay(label, seed, t, &st, s.solver));
        }
    }
    Ok((rows, overlays))
}

fn run_hydro(cfg: &ExperimentConfig, quantum: bool, report: &mut ConvergenceReport) -> Result<()> {
    let label = if quantum {
        Experiment::QuantumHydro.name()
    } else {
        Experiment::ClassicalHydro.name()
    };
    let profiles = sample_profiles(&cfg.profiles)?;
    let flavor = if quantum {
        profiles.check_quantum()?;
        info!(
            "thermal energy profile: n = {}, {} seeds from {}",
            cfg.thermal_n, cfg.thermal_seeds, cfg.thermal_seed_base
        );
        let tp = thermal_energy_profile(cfg.mass_law, &profiles, cfg.thermal_n, cfg.thermal_seeds, cfg.thermal_seed_base)?;
        report.scalars.insert(format!("{label}/b_bar_bulk"), tp.bulk_mean(0.05));
        report.scalars.insert(format!("{label}/b_bar_flatness"), tp.flatness(0.05));
        MacroFlavor::Quantum(tp.to_tabulated(cfg.thermal_bins)?)
    } else {
        MacroFlavor::Classical
    };
    let solver = MacroSolver::new(&profiles, cfg.mass_law.mean(), cfg.macro_modes, &flavor)?;
    let targets = Targets::new(cfg, &solver)?;
    let cells = all_cells(cfg);
    let overlay_cell = cells.last().copied().map(|(n, _)| (n, cfg.seeds.list()[0])).unwrap_or((0, 0));
    let setup = HydroSetup {
        cfg,
        profiles: &profiles,
        solver: &solver,
        targets: &targets,
        quantum,
        overlay_cell,
    };
    let results = run_cells(&cells, |n, seed| hydro_cell(&setup, n, seed));
    let mut rows = Vec::new();
    for (n, seed, res) in results {
        match res {
            Ok((r, o)) => {
                rows.extend(r);
                report.overlays.extend(o);
            }
            Err(e) => report.failures.push(failure(label, n, seed, &e)),
        }
    }
    let agg = aggregate_rows(&rows);
    let mut markov = Vec::new();
    for r in agg.iter().filter(|r| r.metric.starts_with("quadvar_") || r.metric.starts_with("mse_")) {
        let b = markov_bound(r.value.max(0.0), cfg.delta)?;
        let mut m = r.clone();
        m.metric = format!("markov_{}", r.metric);
        m.value = b;
        m.stderr = r.stderr / (cfg.delta * cfg.delta);
        markov.push(m);
    }
    report.rows.extend(rows);
    report.rows.extend(agg);
    report.rows.extend(markov);
    let ratio = if quantum { QUANTUM_RATIO } else { CLASSICAL_RATIO };
    add_fits(report, |e, m| {
        if e != label {
            return None;
        }
        if m.starts_with("quadvar_") || m.starts_with("mse_") {
            Some(Some(ratio))
        } else if m.starts_with("abs_gap_") {
            Some((!quantum).then_some(CLASSICAL_RATIO))
        } else if m.starts_with("markov_") || m.starts_with("u_less") || m == "u_greater" {
            Some(None)
        } else {
            None
        }
    });
    Ok(())
}

pub(super) fn run_classical_hydro(cfg: &ExperimentConfig, report: &mut ConvergenceReport) -> Result<()> {
    run_hydro(cfg, false, report)
}

pub(super) fn run_quantum_hydro(cfg: &ExperimentConfig, report: &mut ConvergenceReport) -> Result<()> {
    run_hydro(cfg, true, report)
}

pub(super) fn run_euler(cfg: &ExperimentConfig, report: &mut ConvergenceReport) -> Result<()> {
    let label = Experiment::EulerSolve.name();
    let profiles = sample_profiles(&cfg.profiles)?;
    let m_bar = cfg.mass_law.mean();
    let solver = MacroSolver::new(&profiles, m_bar, cfg.macro_modes, &MacroFlavor::Classical)?;
    let g = cfg.macro_grid;
    let start = solver.fields(0.0, g)?;
    let c0: Vec<f64> = (0..=g)
        .map(|i| start.e[i] - start.p[i].powi(2) / (2.0 * m_bar) - start.r[i].powi(2) / 2.0)
        .collect();
    let mom0 = solver.integrate_against(|_| 1.0, Field::P, 0.0, TARGET_TOL)?;
    let norm0 = solver.mode_norm(0.0);
    let (mut res_max, mut slaving_max, mut mom_max, mut boundary_max) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for &t in &cfg.times {
        let now = solver.fields(t, g)?;
        let later = solver.fields(t + RESIDUAL_STEP, g)?;
        let res = pde_residuals(&now, &later)?;
        let slaving = (0..=g)
            .map(|i| (now.e[i] - now.p[i].powi(2) / (2.0 * m_bar) - now.r[i].powi(2) / 2.0 - c0[i]).abs())
            .fold(0.0, f64::max);
        let mom = (solver.integrate_against(|_| 1.0, Field::P, t, TARGET_TOL)? - mom0).abs();
        let boundary = now.r[0].abs().max(now.r[g].abs());
        let norm = (solver.mode_norm(t) - norm0).abs() / norm0.max(f64::MIN_POSITIVE);
        let row = |m: &str, v: f64| Row::new(label, g, "-", t, "-", m, v);
        report.rows.extend([
            row("residual_r", res.r),
            row("residual_p", res.p),
            row("residual_e", res.e),
            row("slaving_drift", slaving),
            row("momentum_drift", mom),
            row("boundary_r", boundary),
            row("mode_norm_drift", if norm0 > 0.0 { norm } else { 0.0 }),
        ]);
        res_max = res_max.max(res.max());
        slaving_max = slaving_max.max(slaving);
        mom_max = mom_max.max(mom);
        boundary_max = boundary_max.max(boundary);
        report.fields.push(now);
    }
    report.scalars.insert("euler/residual_max".into(), res_max);
    report.scalars.insert("euler/slaving_drift_max".into(), slaving_max);
    report.scalars.insert("euler/momentum_drift_max".into(), mom_max);
    report.checks.insert("euler/residuals".into(), res_max < 1e-6);
    report.checks.insert("euler/slaving".into(), slaving_max < 1e-8);
    report.checks.insert("euler/momentum".into(), mom_max < 1e-10);
    report.checks.insert("euler/boundary".into(), boundary_max == 0.0);
    Ok(())
}

/// Distinct random site pairs `x != y`.
fn random_pairs(n: usize, count: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = rng::stream(Domain::Misc, 0, seed, 0);
    let mut out: Vec<(usize, usize)> = Vec::with_capacity(count);
    while out.len() < count {
        let x = rng.gen_range(0..n);
        let y = rng.gen_range(0..n);
        if x != y && !out.contains(&(x, y)) && !out.contains(&(y, x)) {
            out.push((x, y));
        }
    }
    out
}

/// z-score of the sample mean of `q` against `target`.
fn z_score(q: &[f64], target: f64) -> f64 {
    let n = q.len() as f64;
    (stats::mean(q) - target) / (stats::variance(q) / n).sqrt()
}

pub(super) fn run_monte_carlo(cfg: &ExperimentConfig, report: &mut ConvergenceReport) -> Result<()> {
    let label = Experiment::MonteCarloCheck.name();
    let n = cfg.n_list[0];
    let seed = cfg.seeds.list()[0];
    let t = cfg.times[0];
    let profiles = sample_profiles(&cfg.profiles)?;
    let chain = sample_masses(n, cfg.mass_law, seed)?;
    let spec = build_spectral_with(&chain, Checks::Full)?;
    let state0 = local_gibbs_moments(&chain, &profiles);
    let map = EvolutionMap::at_macro_time(&spec, t);
    let exact = evolve_covariance(&state0, &map)?;

    let pairs = random_pairs(n, WICK_PAIRS, seed);
    let mut sites: Vec<usize> = pairs.iter().flat_map(|&(x, y)| [x, y]).collect();
    sites.sort_unstable();
    sites.dedup();
    let row_of = |x: usize| sites.binary_search(&x).expect("site sampled");
    let u_p = spec.u_p();
    let u_sites = DMatrix::from_fn(sites.len(), n, |i, k| u_p[(sites[i], k)]);

    // Centred momenta at the sampled sites, one column per replica.
    let total = cfg.mc_samples;
    let mut p_t = DMatrix::<f64>::zeros(sites.len(), total);
    let chunks: Vec<usize> = (0..total.div_ceil(MC_CHUNK)).collect();
    let parts: Vec<Result<DMatrix<f64>>> = chunks
        .par_iter()
        .map(|&c| {
            let count = MC_CHUNK.min(total - c * MC_CHUNK);
            let mut rng = rng::stream(Domain::StateSamples, 0, seed, c as u64);
            let (rs, ps) = sample_batch(&state0, count, &mut rng)?;
            let r_hat = spec.phi_r.tr_mul(&rs);
            let mut p_hat = spec.phi_p_tilde.tr_mul(&ps);
            for j in 0..count {
                for k in 1..n {
                    p_hat[(k, j)] = map.cos[k] * p_hat[(k, j)] - map.sin[k] * r_hat[(k - 1, j)];
                }
            }
            let mut out = &u_sites * p_hat;
            for (i, &x) in sites.iter().enumerate() {
                out.row_mut(i).add_scalar_mut(-exact.mean_p[x]);
            }
            Ok(out)
        })
        .collect();
    for (c, part) in parts.into_iter().enumerate() {
        let part = part?;
        p_t.columns_mut(c * MC_CHUNK, part.ncols()).copy_from(&part);
    }

    let mut worst = 0.0f64;
    for &(x, y) in &pairs {
        let (ix, iy) = (row_of(x), row_of(y));
        let px: Vec<f64> = p_t.row(ix).iter().copied().collect();
        let py: Vec<f64> = p_t.row(iy).iter().copied().collect();
        let a: Vec<f64> = px.iter().map(|v| v * v).collect();
        let b: Vec<f64> = py.iter().map(|v| v * v).collect();
        let (ma, mb) = (stats::mean(&a), stats::mean(&b));
        let ab: Vec<f64> = a.iter().zip(&b).map(|(a, b)| a * b).collect();
        let truncated = stats::mean(&ab) - ma * mb;
        // Influence function of the truncated moment for its standard error.
        let psi: Vec<f64> = (0..total).map(|i| ab[i] - mb * a[i] - ma * b[i]).collect();
        let se = (stats::variance(&psi) / total as f64).sqrt();
        let target = 2.0 * exact.sym.pp[(x, y)].powi(2);
        let z_wick = (truncated - target) / se;
        let cube: Vec<f64> = px.iter().map(|v| v * v * v).collect();
        let mixed: Vec<f64> = px.iter().zip(&py).map(|(u, v)| u * u * v).collect();
        let z_cube = z_score(&cube, 0.0);
        let z_mixed = z_score(&mixed, 0.0);
        let f = format!("x={x};y={y}");
        let row = |m: &str, v: f64| Row::new(label, n, seed, t, &f, m, v);
        report.rows.extend([
            row("wick_truncated", truncated).with_stderr(se),
            row("wick_target", target),
            row("wick_z", z_wick),
            row("odd_xxx_z", z_cube),
            row("odd_xxy_z", z_mixed),
        ]);
        worst = worst.max(z_wick.abs()).max(z_cube.abs()).max(z_mixed.abs());
    }
    report.scalars.insert("monte_carlo/max_abs_z".into(), worst);
    report.checks.insert("monte_carlo/z_below_5".into(), worst < 5.0);
    Ok(())
}
