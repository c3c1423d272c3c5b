//! Report rows, seed aggregation, fits and the CSV/JSON writers.

use super::config::ExperimentConfig;
use crate::error::{ChainError, Result};
use crate::euler_macro::MacroFields;
use crate::stats;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;

/// Seed label of rows aggregated over the ensemble.
pub const ALL_SEEDS: &str = "all";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub experiment: String,
    pub n: usize,
    pub seed: String,
    pub t: f64,
    pub f: String,
    pub metric: String,
    pub value: f64,
    pub stderr: f64,
}

impl Row {
    pub fn new(experiment: &str, n: usize, seed: impl ToString, t: f64, f: &str, metric: &str, value: f64) -> Self {
        Row {
            experiment: experiment.to_string(),
            n,
            seed: seed.to_string(),
            t,
            f: f.to_string(),
            metric: metric.to_string(),
            value,
            stderr: 0.0,
        }
    }

    pub fn with_stderr(mut self, stderr: f64) -> Self {
        self.stderr = stderr;
        self
    }
}

/// Trend of an aggregated metric along the n-sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitSummary {
    pub ns: Vec<usize>,
    pub values: Vec<f64>,
    /// Log-log slope against n.
    pub slope: f64,
    pub ratio_first_last: f64,
    /// Strictly decreasing with `last < first * required_ratio`; `None` when no trend is required.
    pub pass: Option<bool>,
}

impl FitSummary {
    pub fn from_series(ns: Vec<usize>, values: Vec<f64>, required_ratio: Option<f64>) -> Self {
        let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
        let positive = values.iter().all(|&v| v > 0.0);
        let slope = if positive {
            stats::loglog_fit(&xs, &values).map_or(f64::NAN, |f| f.slope)
        } else {
            f64::NAN
        };
        let ratio = match (values.first(), values.last()) {
            (Some(&a), Some(&b)) if a != 0.0 => b / a,
            _ => f64::NAN,
        };
        let pass = required_ratio.map(|q| {
            values.len() >= 2 && values.windows(2).all(|w| w[1] < w[0]) && values[values.len() - 1] < q * values[0]
        });
        FitSummary {
            ns,
            values,
            slope,
            ratio_first_last: ratio,
            pass,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellFailure {
    pub experiment: String,
    pub n: usize,
    pub seed: String,
    pub error: String,
}

/// Smoothed microscopic profile next to the macroscopic field.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Overlay {
    pub experiment: String,
    pub n: usize,
    pub seed: u64,
    pub t: f64,
    pub field: String,
    pub y: Vec<f64>,
    pub micro: Vec<f64>,
    pub macro_values: Vec<f64>,
}

/// Disorder-averaged correlator against distance for one `n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayCurve {
    pub label: String,
    pub alpha: f64,
    pub n: usize,
    pub distances: Vec<usize>,
    pub correlator: Vec<f64>,
    pub fit_slope: f64,
    pub fit_intercept: f64,
    pub fit_r: f64,
    pub window: (f64, f64),
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub experiment: String,
    pub version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    #[serde(skip)]
    pub rows: Vec<Row>,
    pub fits: BTreeMap<String, FitSummary>,
    pub scalars: BTreeMap<String, f64>,
    /// Named pass/fail checks evaluated on the summary.
    pub checks: BTreeMap<String, bool>,
    pub failures: Vec<CellFailure>,
    #[serde(skip)]
    pub overlays: Vec<Overlay>,
    #[serde(skip)]
    pub decay: Vec<DecayCurve>,
    #[serde(skip)]
    pub fields: Vec<MacroFields>,
}

impl ConvergenceReport {
    pub fn new(config: &ExperimentConfig) -> Self {
        ConvergenceReport {
            experiment: config.experiment.name().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(),
            config: config.clone(),
            rows: Vec::new(),
            fits: BTreeMap::new(),
            scalars: BTreeMap::new(),
            checks: BTreeMap::new(),
            failures: Vec::new(),
            overlays: Vec::new(),
            decay: Vec::new(),
            fields: Vec::new(),
        }
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.values().all(|&c| c)
    }

    /// Aggregated row lookup.
    pub fn aggregate(&self, experiment: &str, n: usize, t: f64, f: &str, metric: &str) -> Option<&Row> {
        self.rows.iter().find(|r| {
            r.seed == ALL_SEEDS && r.experiment == experiment && r.n == n && r.t == t && r.f == f && r.metric == metric
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "experiment,n,seed,t,f,metric,value,stderr")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{:.15e},{:.15e}",
                r.experiment, r.n, r.seed, r.t, r.f, r.metric, r.value, r.stderr
            )?;
        }
        Ok(())
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self).map_err(|e| ChainError::Format(e.to_string()))?;
        writeln!(w)?;
        Ok(())
    }
}

/// `value / delta^2`, the Chebyshev-Markov bound on `P(|O| > delta)` given `<O^2> = value`.
pub fn markov_bound(value: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(ChainError::InvalidParameter(format!("delta = {delta} must be positive")));
    }
    if !(value >= 0.0) {
        return Err(ChainError::InvalidParameter(format!("second moment {value} is negative")));
    }
    Ok(value / (delta * delta))
}

/// Mean and standard error over seeds of every `(experiment, n, t, f, metric)` group.
///
/// Rows are grouped in a sorted map, so the result does not depend on the order
/// in which cells finished.
pub fn aggregate_rows(rows: &[Row]) -> Vec<Row> {
    let mut groups: BTreeMap<(String, usize, u64, String, String), Vec<(String, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.seed.parse::<u64>().is_ok()) {
        groups
            .entry((r.experiment.clone(), r.n, r.t.to_bits(), r.f.clone(), r.metric.clone()))
            .or_default()
            .push((r.seed.clone(), r.value));
    }
    groups
        .into_iter()
        .map(|((experiment, n, t, f, metric), mut vals)| {
            vals.sort_by_key(|(s, _)| s.parse::<u64>().unwrap_or(u64::MAX));
            let v: Vec<f64> = vals.into_iter().map(|(_, v)| v).collect();
            Row {
                experiment,
                n,
                seed: ALL_SEEDS.to_string(),
                t: f64::from_bits(t),
                f,
                metric,
                value: stats::mean(&v),
                stderr: stats::stderr(&v),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markov_examples() {
        assert_eq!(markov_bound(0.0, 0.3).unwrap(), 0.0);
        assert!((markov_bound(1e-4, 0.05).unwrap() - 0.04).abs() < 1e-15);
        assert!(markov_bound(1.0, 0.0).is_err());
        assert!(markov_bound(-1.0, 0.1).is_err());
        // Monotone in the value.
        assert!(markov_bound(2e-4, 0.05).unwrap() > markov_bound(1e-4, 0.05).unwrap());
    }

    #[test]
    fn aggregation_ignores_order() {
        let mk = |seed: u64, v: f64| Row::new("x", 8, seed, 0.5, "sin", "m", v);
        let a = vec![mk(0, 1.0), mk(1, 2.0), mk(2, 4.0)];
        let mut b = a.clone();
        b.reverse();
        assert_eq!(aggregate_rows(&a), aggregate_rows(&b));
        let agg = aggregate_rows(&a);
        assert_eq!(agg.len(), 1);
        assert!((agg[0].value - 7.0 / 3.0).abs() < 1e-15);
        assert_eq!(agg[0].seed, ALL_SEEDS);
    }

    #[test]
    fn fit_summary_trend() {
        let f = FitSummary::from_series(vec![256, 512, 1024], vec![4.0, 2.0, 1.0], Some(0.5));
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert_eq!(f.ratio_first_last, 0.25);
        assert_eq!(f.pass, Some(true));
        let g = FitSummary::from_series(vec![256, 512, 1024], vec![4.0, 4.5, 1.0], Some(0.5));
        assert_eq!(g.pass, Some(false));
        let h = FitSummary::from_series(vec![256, 512], vec![4.0, 3.0], Some(0.5));
        assert_eq!(h.pass, Some(false));
        assert_eq!(FitSummary::from_series(vec![1, 2], vec![1.0, 2.0], None).pass, None);
    }

    #[test]
    fn csv_has_enough_digits() {
        let cfg = ExperimentConfig::default();
        let mut rep = ConvergenceReport::new(&cfg);
        rep.rows.push(Row::new("classical-hydro", 256, 3, 0.5, "sin", "gap_p", 1.0 / 3.0));
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let line = s.lines().nth(1).unwrap();
        assert!(line.starts_with("classical-hydro,256,3,0.5,sin,gap_p,3.333333333333333e-1,"));
        let back: f64 = line.split(',').nth(6).unwrap().parse().unwrap();
        assert!((back - 1.0 / 3.0).abs() < 1e-15);
        assert!(!s.contains('\r'));
    }
}
