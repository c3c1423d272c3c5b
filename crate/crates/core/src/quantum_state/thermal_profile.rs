//! Disorder-averaged thermal energy `b_bar(y)` of the locally Gibbs state.

use super::{b_profile_from_modes, build_thermal_with};
use crate::chain_model::{sample_masses, MassLaw, Profiles, Tabulated};
use crate::error::{ChainError, Result};
use crate::rng::{self, Domain};
use crate::spectral::Checks;
use crate::stats;
use rayon::prelude::*;

#[derive(Clone, Debug)]
pub struct ThermalProfile {
    pub n: usize,
    pub n_seeds: usize,
    /// `x / n` for `x = 1..=n`.
    pub y: Vec<f64>,
    pub mean: Vec<f64>,
    /// Bootstrap standard error over seeds.
    pub stderr: Vec<f64>,
}

/// Averages `b_x` over `n_seeds` chains with seeds `seed_base..seed_base + n_seeds`.
pub fn thermal_energy_profile(
    law: MassLaw,
    profiles: &Profiles,
    n: usize,
    n_seeds: usize,
    seed_base: u64,
) -> Result<ThermalProfile> {
    if n_seeds < 8 {
        return Err(ChainError::InvalidParameter(format!("need at least 8 seeds, got {n_seeds}")));
    }
    let per_seed: Vec<Vec<f64>> = (0..n_seeds as u64)
        .into_par_iter()
        .map(|i| {
            let chain = sample_masses(n, law, seed_base + i)?;
            let th = build_thermal_with(&chain, profiles, Checks::Fast)?;
            Ok(b_profile_from_modes(&th, &chain))
        })
        .collect::<Result<_>>()?;
    let mut rng = rng::stream(Domain::Bootstrap, 0, seed_base, n as u64);
    let mut mean = Vec::with_capacity(n);
    let mut stderr = Vec::with_capacity(n);
    for x in 0..n {
        let col: Vec<f64> = per_seed.iter().map(|b| b[x]).collect();
        mean.push(stats::mean(&col));
        stderr.push(stats::bootstrap_stderr(&col, 200, &mut rng));
    }
    Ok(ThermalProfile {
        n,
        n_seeds,
        y: (1..=n).map(|x| x as f64 / n as f64).collect(),
        mean,
        stderr,
    })
}

impl ThermalProfile {
    fn bulk_range(&self, edge: f64) -> std::ops::Range<usize> {
        let cut = (edge * self.n as f64).ceil() as usize;
        cut..self.n - cut
    }

    pub fn bulk_mean(&self, edge: f64) -> f64 {
        stats::mean(&self.mean[self.bulk_range(edge)])
    }

    /// Max relative deviation from the bulk mean, sites within `edge` of the ends excluded.
    pub fn flatness(&self, edge: f64) -> f64 {
        let m = self.bulk_mean(edge);
        self.mean[self.bulk_range(edge)].iter().map(|b| ((b - m) / m).abs()).fold(0.0, f64::max)
    }

    /// Bin averages at the bin centres, extended flat to `y = 0` and `y = 1`.
    pub fn to_tabulated(&self, bins: usize) -> Result<Tabulated> {
        if bins < 2 || bins > self.n {
            return Err(ChainError::InvalidParameter(format!("{bins} bins for {} sites", self.n)));
        }
        let mut y = vec![0.0];
        let mut v = Vec::with_capacity(bins + 2);
        for b in 0..bins {
            let lo = b * self.n / bins;
            let hi = (b + 1) * self.n / bins;
            v.push(stats::mean(&self.mean[lo..hi]));
            y.push((b as f64 + 0.5) / bins as f64);
        }
        v.insert(0, v[0]);
        v.push(*v.last().unwrap());
        y.push(1.0);
        Tabulated::new(y, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain_model::{sample_profiles, ProfilePreset};

    #[test]
    fn profile_exceeds_classical_and_tabulates() {
        let p = sample_profiles(&ProfilePreset::LinearTemperature { beta_left: 0.5, beta_right: 2.0 }).unwrap();
        let prof = thermal_energy_profile(MassLaw::default(), &p, 128, 8, 100).unwrap();
        for x in 0..127 {
            assert!(prof.mean[x] >= 1.0 / p.beta(prof.y[x]));
            assert!(prof.stderr[x] >= 0.0);
        }
        let tab = prof.to_tabulated(16).unwrap();
        assert_eq!(tab.y.len(), 18);
        assert_eq!(tab.y[0], 0.0);
        assert_eq!(*tab.y.last().unwrap(), 1.0);
        assert!(thermal_energy_profile(MassLaw::default(), &p, 64, 4, 0).is_err());
    }

    #[test]
    fn high_temperature_equipartition() {
        let eps = 1e-3;
        let p = sample_profiles(&ProfilePreset::Equilibrium { beta: eps }).unwrap();
        let prof = thermal_energy_profile(MassLaw::default(), &p, 64, 8, 7).unwrap();
        for x in 0..63 {
            assert!((prof.mean[x] * eps - 1.0).abs() < 1e-5);
        }
    }
}
