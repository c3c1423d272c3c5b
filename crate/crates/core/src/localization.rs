//! Localization diagnostics: the high-mode correlator, the frequency floor of
//! the high set, and the off-diagonal mass of the high-mode covariance.

use crate::dynamics::{first_high_mode, mode_split_covariance, ModeCovariance};
use crate::error::{ChainError, Result};
use crate::spectral::SpectralData;
use crate::stats::{self, LineFit};
use serde::Serialize;

/// Number of base sites per chain.
pub const BASE_SITES: usize = 8;

/// Distances `1, 2, 4, ..., n / 4`.
pub fn distance_ladder(n: usize) -> Vec<usize> {
    let mut d = 1;
    let mut out = Vec::new();
    while d <= n / 4 {
        out.push(d);
        d *= 2;
    }
    out
}

/// Base sites `(2i + 1) n / 32`, all at least `n / 4` away from the right end.
pub fn base_sites(n: usize) -> Vec<usize> {
    (0..BASE_SITES).map(|i| (2 * i + 1) * n / 32).collect()
}

/// First mode of `I(alpha)`, i.e. the first `k > n^{1 - alpha}`; errors if the set is empty.
fn high_set_start(n: usize, alpha: f64) -> Result<usize> {
    let k0 = first_high_mode(n, alpha);
    if k0 >= n {
        return Err(ChainError::EmptyModeSet(format!("no mode k > n^(1 - {alpha}) for n = {n}")));
    }
    Ok(k0)
}

/// Correlator of one chain, averaged over the base sites.
#[derive(Clone, Debug, Serialize)]
pub struct CorrelatorSample {
    pub n: usize,
    pub distances: Vec<usize>,
    pub values: Vec<f64>,
    /// `max_x sum_{k in I} (phi~_x^k)^2` over the base sites.
    pub diag_max: f64,
}

/// `sum_{k in I(alpha)} |phi~_x^k phi~_y^k|` on the base-site / distance ladder.
pub fn correlator_sample(spec: &SpectralData, alpha: f64) -> Result<CorrelatorSample> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(ChainError::InvalidParameter(format!("alpha = {alpha} must lie in (0, 1/2)")));
    }
    let n = spec.n;
    let k0 = high_set_start(n, alpha)?;
    let distances = distance_ladder(n);
    let sites = base_sites(n);
    let phi = &spec.phi_p_tilde;
    let pair = |x: usize, y: usize| -> f64 { (k0..n).map(|k| (phi[(x, k)] * phi[(y, k)]).abs()).sum() };
    let values = distances
        .iter()
        .map(|&d| sites.iter().map(|&x| pair(x, x + d)).sum::<f64>() / sites.len() as f64)
        .collect();
    let diag_max = sites.iter().map(|&x| pair(x, x)).fold(0.0, f64::max);
    Ok(CorrelatorSample {
        n,
        distances,
        values,
        diag_max,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalizationScan {
    pub alpha: f64,
    pub n: usize,
    pub n_seeds: usize,
    pub distances: Vec<usize>,
    /// Disorder average of the correlator at each distance.
    pub correlator: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Fit of `log S` against `d` over `[n^{2 alpha}, n / 4]`.
    pub fit: Option<LineFit>,
    pub window: (f64, f64),
    pub diag_max: f64,
}

impl LocalizationScan {
    /// Pairs `(x, y, distance)` scanned on every chain.
    pub fn pairs(&self) -> Vec<(usize, usize, usize)> {
        let sites = base_sites(self.n);
        self.distances
            .iter()
            .flat_map(|&d| sites.iter().map(move |&x| (x, x + d, d)))
            .collect()
    }
}

/// Disorder average and fit over per-chain samples of the same `n`.
pub fn aggregate_correlator(samples: &[CorrelatorSample], alpha: f64) -> Result<LocalizationScan> {
    let first = samples
        .first()
        .ok_or_else(|| ChainError::InvalidParameter("no correlator samples".into()))?;
    let n = first.n;
    if samples.iter().any(|s| s.n != n) {
        return Err(ChainError::InvalidParameter("correlator samples of different sizes".into()));
    }
    let distances = first.distances.clone();
    let mut correlator = Vec::with_capacity(distances.len());
    let mut stderr = Vec::with_capacity(distances.len());
    for i in 0..distances.len() {
        let col: Vec<f64> = samples.iter().map(|s| s.values[i]).collect();
        correlator.push(stats::mean(&col));
        stderr.push(stats::stderr(&col));
    }
    let window = ((n as f64).powf(2.0 * alpha), n as f64 / 4.0);
    let (xs, ys): (Vec<f64>, Vec<f64>) = distances
        .iter()
        .zip(&correlator)
        .filter(|(&d, &s)| d as f64 >= window.0 && d as f64 <= window.1 && s > 0.0)
        .map(|(&d, &s)| (d as f64, s.ln()))
        .unzip();
    Ok(LocalizationScan {
        alpha,
        n,
        n_seeds: samples.len(),
        distances,
        correlator,
        stderr,
        fit: stats::linear_fit(&xs, &ys),
        window,
        diag_max: samples.iter().map(|s| s.diag_max).fold(0.0, f64::max),
    })
}

/// Correlator scan over an ensemble of at least 8 chains of equal size.
pub fn high_mode_correlator(ensemble: &[SpectralData], alpha: f64) -> Result<LocalizationScan> {
    if ensemble.len() < 8 {
        return Err(ChainError::InvalidParameter(format!(
            "ensemble of {} chains, need at least 8",
            ensemble.len()
        )));
    }
    let samples = ensemble
        .iter()
        .map(|s| correlator_sample(s, alpha))
        .collect::<Result<Vec<_>>>()?;
    aggregate_correlator(&samples, alpha)
}

/// `max_{k in I(gamma)} 1 / omega_k` for one chain.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MinFreq {
    pub n: usize,
    pub k_star: usize,
    pub inv_omega: f64,
}

pub fn min_freq(spec: &SpectralData, gamma: f64) -> Result<MinFreq> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(ChainError::InvalidParameter(format!("gamma = {gamma} must lie in (0, 1)")));
    }
    let k_star = high_set_start(spec.n, gamma)?;
    // Ascending frequencies: the smallest in I(gamma) is the first one.
    Ok(MinFreq {
        n: spec.n,
        k_star,
        inv_omega: 1.0 / spec.omega[k_star],
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MinFreqScan {
    pub gamma: f64,
    /// `(n, mean over seeds, max over seeds)`.
    pub per_n: Vec<(usize, f64, f64)>,
    /// Log-log slope of the per-n maximum against n.
    pub slope: f64,
    /// Exponent `3 gamma / 2` of the proven bound.
    pub proven_exponent: f64,
}

/// Summarizes per-chain `MinFreq` rows, grouped by `n`.
pub fn min_freq_scan(rows: &[MinFreq], gamma: f64) -> Result<MinFreqScan> {
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let per_n: Vec<(usize, f64, f64)> = ns
        .iter()
        .map(|&n| {
            let v: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.inv_omega).collect();
            (n, stats::mean(&v), v.iter().copied().fold(0.0, f64::max))
        })
        .collect();
    if rows.iter().any(|r| !(r.inv_omega.is_finite() && r.inv_omega > 0.0)) {
        return Err(ChainError::SpectralCheck("non-positive frequency in the high set".into()));
    }
    let xs: Vec<f64> = per_n.iter().map(|p| p.0 as f64).collect();
    let ys: Vec<f64> = per_n.iter().map(|p| p.2).collect();
    let slope = stats::loglog_fit(&xs, &ys).map(|f| f.slope).unwrap_or(f64::NAN);
    Ok(MinFreqScan {
        gamma,
        per_n,
        slope,
        proven_exponent: 1.5 * gamma,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct OffdiagMass {
    /// `(1 / n^2) sum_{|x - y| <= 2 n^theta} |C_pp,xy / sqrt(m_x m_y)|` of the high block.
    pub less: f64,
    /// The same sum over `|x - y| > 2 n^theta`.
    pub greater: f64,
}

/// `8 n^{theta - 1} / beta_minus`, the bound on the near-diagonal part.
pub fn offdiag_less_bound(n: usize, theta: f64, beta_minus: f64) -> f64 {
    8.0 * (n as f64).powf(theta - 1.0) / beta_minus
}

/// Splits the high-mode momentum covariance of `mc` (a state at any time) at `|x - y| = 2 n^theta`.
pub fn high_mode_offdiag_mass(mc: &ModeCovariance, spec: &SpectralData, gamma: f64, theta: f64) -> Result<OffdiagMass> {
    if !(0.0 < 2.0 * gamma && 2.0 * gamma < theta && theta < 1.0) {
        return Err(ChainError::InvalidParameter(format!(
            "need 0 < 2 gamma < theta < 1, got gamma = {gamma}, theta = {theta}"
        )));
    }
    let split = mode_split_covariance(mc, spec, gamma)?;
    let n = spec.n;
    let cut = 2.0 * (n as f64).powf(theta);
    let sm = spec.sqrt_masses();
    let (mut less, mut greater) = (0.0, 0.0);
    for y in 0..n {
        for x in 0..n {
            let v = (split.high.pp[(x, y)] / (sm[x] * sm[y])).abs();
            if x.abs_diff(y) as f64 <= cut {
                less += v;
            } else {
                greater += v;
            }
        }
    }
    let nn = (n * n) as f64;
    Ok(OffdiagMass {
        less: less / nn,
        greater: greater / nn,
    })
}
