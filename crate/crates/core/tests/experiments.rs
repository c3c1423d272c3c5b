use chainlab::chain_model::{ProfilePreset, TestFunction};
use chainlab::experiments::{run, write_outputs, Experiment, ExperimentConfig, Seeds, ALL_SEEDS};
use chainlab::ChainError;

fn small(experiment: Experiment) -> ExperimentConfig {
    ExperimentConfig {
        experiment,
        n_list: vec![32, 64],
        seeds: Seeds::Range { base: 3, count: 4 },
        times: vec![0.5],
        ..ExperimentConfig::default()
    }
}

fn csv(report: &chainlab::experiments::ConvergenceReport) -> String {
    let mut buf = Vec::new();
    report.write_csv(&mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn classical_hydro_rows_and_fits() {
    let cfg = small(Experiment::ClassicalHydro);
    let rep = run(&cfg).unwrap();
    assert!(rep.failures.is_empty());
    for z in ["r", "p", "e"] {
        for m in ["gap", "abs_gap", "quadvar", "mse", "markov_quadvar"] {
            let metric = format!("{m}_{z}");
            let row = rep.aggregate("classical-hydro", 64, 0.5, "sin", &metric);
            assert!(row.is_some(), "{metric}");
            assert!(row.unwrap().value.is_finite());
        }
        let key = format!("classical-hydro/quadvar_{z}/sin/t=0.5");
        assert_eq!(rep.fits[&key].ns, vec![32, 64]);
        assert!(rep.checks.contains_key(&key));
    }
    // mse = quadvar + gap^2 on every seed row.
    let per_seed = |m: &str| {
        rep.rows
            .iter()
            .find(|r| r.seed == "3" && r.n == 32 && r.metric == m)
            .unwrap()
            .value
    };
    let (q, g, e) = (per_seed("quadvar_p"), per_seed("gap_p"), per_seed("mse_p"));
    assert!((e - q - g * g).abs() <= 1e-15 * e.abs().max(1.0));
    assert_eq!(rep.overlays.len(), 1);
    assert_eq!(rep.overlays[0].n, 64);
}

#[test]
fn report_is_bit_reproducible() {
    let cfg = small(Experiment::ClassicalHydro);
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    assert_eq!(csv(&a), csv(&b));
    let ja = serde_json::to_string(&a).unwrap();
    let jb = serde_json::to_string(&b).unwrap();
    assert_eq!(ja, jb);
    // The same seeds listed in another order give the same aggregates.
    let mut c = cfg.clone();
    c.seeds = Seeds::List(vec![6, 4, 5, 3]);
    let rc = run(&c).unwrap();
    let agg = |r: &chainlab::experiments::ConvergenceReport| {
        let mut v: Vec<_> = r.rows.iter().filter(|r| r.seed == ALL_SEEDS).cloned().collect();
        v.sort_by(|x, y| format!("{x:?}").cmp(&format!("{y:?}")));
        v
    };
    assert_eq!(agg(&a), agg(&rc));
}

#[test]
fn quantum_hydro_runs() {
    let mut cfg = small(Experiment::QuantumHydro);
    cfg.thermal_n = 64;
    cfg.thermal_seeds = 8;
    cfg.thermal_bins = 16;
    let rep = run(&cfg).unwrap();
    assert!(rep.failures.is_empty(), "{:?}", rep.failures);
    assert!(rep.scalars["quantum-hydro/b_bar_bulk"] > 1.0);
    let q = rep.aggregate("quantum-hydro", 64, 0.5, "sin", "quadvar_e").unwrap();
    assert!(q.value > 0.0);
    assert!(rep.fits.contains_key("quantum-hydro/mse_p/sin/t=0.5"));
    // No trend is demanded of the quantum gaps.
    assert_eq!(rep.fits["quantum-hydro/abs_gap_p/sin/t=0.5"].pass, None);
}

#[test]
fn euler_zero_profiles_give_constant_energy() {
    let mut cfg = small(Experiment::EulerSolve);
    cfg.profiles = ProfilePreset::Equilibrium { beta: 2.0 };
    cfg.times = vec![0.0, 0.3, 1.0];
    cfg.macro_grid = 64;
    let rep = run(&cfg).unwrap();
    assert_eq!(rep.fields.len(), 3);
    for f in &rep.fields {
        assert!(f.r.iter().chain(&f.p).all(|&v| v == 0.0));
        assert!(f.e.iter().all(|&v| v == 0.5));
    }
    assert!(rep.all_checks_pass(), "{:?}", rep.checks);
    let dir = tempfile::tempdir().unwrap();
    let paths = write_outputs(&rep, dir.path()).unwrap();
    let body = std::fs::read_to_string(dir.path().join("euler_t=0.3.csv")).unwrap();
    assert!(body.starts_with("y,fr,fp,fe,t\n"));
    assert_eq!(body.lines().count(), 66);
    assert!(paths.iter().any(|p| p.extension().is_some_and(|e| e == "svg")));
    // Writing twice gives identical bytes.
    let again = tempfile::tempdir().unwrap();
    write_outputs(&rep, again.path()).unwrap();
    for p in &paths {
        let rel = p.strip_prefix(dir.path()).unwrap();
        assert_eq!(std::fs::read(p).unwrap(), std::fs::read(again.path().join(rel)).unwrap(), "{rel:?}");
    }
}

#[test]
fn euler_wave_passes_checks() {
    let mut cfg = small(Experiment::EulerSolve);
    cfg.times = vec![0.0, 0.25, 0.5, 1.0];
    let rep = run(&cfg).unwrap();
    assert!(rep.all_checks_pass(), "{:?} {:?}", rep.checks, rep.scalars);
}

#[test]
fn monte_carlo_small() {
    let mut cfg = small(Experiment::MonteCarloCheck);
    cfg.n_list = vec![24];
    cfg.mc_samples = 20_000;
    cfg.times = vec![0.3];
    let rep = run(&cfg).unwrap();
    assert_eq!(rep.rows.iter().filter(|r| r.metric == "wick_z").count(), 20);
    assert!(rep.checks["monte_carlo/z_below_5"], "{:?}", rep.scalars);
}

#[test]
fn localization_small() {
    let mut cfg = small(Experiment::Localization);
    cfg.n_list = vec![64, 128];
    cfg.seeds = Seeds::Range { base: 0, count: 8 };
    let rep = run(&cfg).unwrap();
    assert!(rep.failures.is_empty(), "{:?}", rep.failures);
    assert!(rep.checks["localization/diag_bound"]);
    assert!(rep.scalars.contains_key("localization/min_freq_slope"));
    assert_eq!(rep.decay.iter().filter(|c| c.label == "clean").count(), 2);
    assert!(rep.aggregate("localization", 128, 0.0, "d=1", "correlator").is_some());
}

#[test]
fn spectrum_small() {
    let cfg = small(Experiment::Spectrum);
    let rep = run(&cfg).unwrap();
    assert!(rep.checks["spectrum/structural_checks"]);
    assert_eq!(rep.rows.iter().filter(|r| r.metric == "ground_error" && r.seed != ALL_SEEDS).count(), 8);
}

#[test]
fn convergence_sweep_covers_both_flavors() {
    let mut cfg = small(Experiment::ConvergenceSweep);
    cfg.n_list = vec![32];
    cfg.seeds = Seeds::List(vec![1]);
    cfg.thermal_n = 32;
    cfg.thermal_seeds = 8;
    cfg.thermal_bins = 8;
    cfg.offdiag = true;
    cfg.test_functions = vec![TestFunction::Bump];
    let rep = run(&cfg).unwrap();
    assert!(rep.failures.is_empty(), "{:?}", rep.failures);
    assert!(rep.rows.iter().any(|r| r.experiment == "classical-hydro" && r.metric == "u_less"));
    assert!(rep.rows.iter().any(|r| r.experiment == "quantum-hydro" && r.metric == "mse_e"));
}

#[test]
fn invalid_config_is_a_config_error() {
    let mut cfg = small(Experiment::Localization);
    cfg.gamma = 0.4;
    assert!(matches!(run(&cfg), Err(ChainError::Config(_))));
}

#[test]
fn failing_cells_are_recorded() {
    // alpha so small that the high-mode window is empty at n = 8.
    let mut cfg = small(Experiment::Localization);
    cfg.n_list = vec![8];
    cfg.seeds = Seeds::Range { base: 0, count: 2 };
    cfg.freq_gamma = 0.01;
    cfg.clean_control = false;
    let rep = run(&cfg).unwrap();
    assert_eq!(rep.failures.len(), 2, "{:?}", rep.failures);
    assert!(rep.failures[0].error.contains("empty mode window"));
}

#[test]
fn shipped_configs_parse_and_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{path:?}: {e}"));
            cfg.validate().unwrap_or_else(|e| panic!("{path:?}: {e}"));
            count += 1;
        }
    }
    assert!(count >= 7);
}
