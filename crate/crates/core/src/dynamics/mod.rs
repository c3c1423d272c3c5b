//! Exact harmonic time evolution through the normal-mode rotation.

mod covariance;
mod functionals;

pub use covariance::{
    evolve_covariance, first_high_mode, from_modes, mode_split_covariance, site_map, to_modes, ModeCovariance,
    SplitBlocks,
};
pub use functionals::{
    empirical_mean_functional, energy_covariance, quad_var, quad_var_energy, Field, FunctionalKind,
    FunctionalResult,
};

use crate::classical_state::GaussianChainState;
use crate::error::Result;
use crate::spectral::{check_len, SpectralData};

/// Per-mode rotation by angle `omega_k * time`.
///
/// `time` is microscopic; macroscopic time `t` corresponds to `n * t`.
#[derive(Clone, Debug)]
pub struct EvolutionMap<'a> {
    pub spec: &'a SpectralData,
    pub time: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl<'a> EvolutionMap<'a> {
    pub fn new(spec: &'a SpectralData, time: f64) -> Self {
        let cos = spec.omega.iter().map(|w| (w * time).cos()).collect();
        let sin = spec.omega.iter().map(|w| (w * time).sin()).collect();
        EvolutionMap { spec, time, cos, sin }
    }

    /// Map at macroscopic time `t`, i.e. microscopic time `n t`.
    pub fn at_macro_time(spec: &'a SpectralData, t: f64) -> Self {
        Self::new(spec, spec.n as f64 * t)
    }

    /// `(r_hat, p_hat) -> (c r_hat + s p_hat, c p_hat - s r_hat)` in place.
    /// `r_hat[0]` stays 0 because `omega_0 = 0`.
    pub fn rotate_modes(&self, r_hat: &mut [f64], p_hat: &mut [f64]) {
        for k in 0..r_hat.len() {
            let (c, s) = (self.cos[k], self.sin[k]);
            let (r, p) = (r_hat[k], p_hat[k]);
            r_hat[k] = c * r + s * p;
            p_hat[k] = c * p - s * r;
        }
    }
}

pub fn evolve_sample(r0: &[f64], p0: &[f64], map: &EvolutionMap) -> Result<(Vec<f64>, Vec<f64>)> {
    let spec = map.spec;
    check_len("r0", spec.n - 1, r0.len())?;
    check_len("p0", spec.n, p0.len())?;
    let (mut rh, mut ph) = spec.mode_transform(r0, p0)?;
    map.rotate_modes(&mut rh, &mut ph);
    spec.inverse_mode_transform(&rh, &ph)
}

pub fn evolve_means(state: &GaussianChainState, map: &EvolutionMap) -> Result<(Vec<f64>, Vec<f64>)> {
    evolve_sample(&state.mean_r, &state.mean_p, map)
}

/// Total energy `sum p^2 / 2m + sum r^2 / 2` of a configuration.
pub fn total_energy(r: &[f64], p: &[f64], masses: &[f64]) -> f64 {
    let kin: f64 = p.iter().zip(masses).map(|(p, m)| p * p / (2.0 * m)).sum();
    let pot: f64 = r.iter().map(|r| r * r / 2.0).sum();
    kin + pot
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain_model::{sample_masses, MassLaw};
    use crate::spectral::build_spectral;
    use rand::Rng;

    #[test]
    fn zero_time_is_identity() {
        let c = sample_masses(40, MassLaw::default(), 1).unwrap();
        let s = build_spectral(&c).unwrap();
        let map = EvolutionMap::new(&s, 0.0);
        let r: Vec<f64> = (0..39).map(|x| (x as f64).sin()).collect();
        let p: Vec<f64> = (0..40).map(|x| (x as f64 * 0.3).cos()).collect();
        let (r1, p1) = evolve_sample(&r, &p, &map).unwrap();
        for (a, b) in r.iter().zip(&r1).chain(p.iter().zip(&p1)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_mode_oscillates() {
        let c = sample_masses(64, MassLaw::default(), 2).unwrap();
        let s = build_spectral(&c).unwrap();
        let k = 9;
        let tau = 3.7;
        let p0: Vec<f64> = (0..64).map(|x| c.masses[x].sqrt() * s.phi_p[(x, k)]).collect();
        let r0 = vec![0.0; 63];
        let (r, p) = evolve_sample(&r0, &p0, &EvolutionMap::new(&s, tau)).unwrap();
        let (c_, s_) = ((s.omega[k] * tau).cos(), (s.omega[k] * tau).sin());
        for x in 0..64 {
            assert!((p[x] - c_ * p0[x]).abs() < 1e-12);
        }
        for x in 0..63 {
            assert!((r[x] - s_ * s.phi_r[(x, k - 1)]).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_preserves_mode_norms() {
        let c = sample_masses(30, MassLaw::default(), 3).unwrap();
        let s = build_spectral(&c).unwrap();
        let map = EvolutionMap::new(&s, 17.0);
        let mut rng = crate::rng::stream(crate::rng::Domain::Misc, 0, 0, 0);
        let mut rh: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
        rh[0] = 0.0;
        let mut ph: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let before: Vec<f64> = rh.iter().zip(&ph).map(|(r, p)| r * r + p * p).collect();
        map.rotate_modes(&mut rh, &mut ph);
        assert_eq!(rh[0], 0.0);
        for (k, b) in before.iter().enumerate() {
            assert!((rh[k] * rh[k] + ph[k] * ph[k] - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conserves_energy_and_momentum() {
        let n = 512;
        let c = sample_masses(n, MassLaw::default(), 4).unwrap();
        let s = build_spectral(&c).unwrap();
        let mut rng = crate::rng::stream(crate::rng::Domain::Misc, 0, 1, 0);
        let r: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (r1, p1) = evolve_sample(&r, &p, &EvolutionMap::new(&s, n as f64)).unwrap();
        let e0 = total_energy(&r, &p, &c.masses);
        let e1 = total_energy(&r1, &p1, &c.masses);
        assert!(((e1 - e0) / e0).abs() < 1e-10);
        let m0: f64 = p.iter().sum();
        let m1: f64 = p1.iter().sum();
        assert!((m1 - m0).abs() < 1e-10);
    }

    #[test]
    fn matches_direct_integration() {
        // Independent check: leapfrog on q with small steps.
        let n = 12;
        let c = sample_masses(n, MassLaw::default(), 5).unwrap();
        let s = build_spectral(&c).unwrap();
        let q0: Vec<f64> = (0..n).map(|x| 0.1 * (x as f64).sin()).collect();
        let p0: Vec<f64> = (0..n).map(|x| 0.2 * (x as f64 * 0.7).cos()).collect();
        let r0 = crate::chain_model::grad_plus(&q0);
        let tau = 2.5;
        let steps = 200_000;
        let h = tau / steps as f64;
        let (mut q, mut p) = (q0.clone(), p0.clone());
        let force = |q: &[f64]| crate::chain_model::grad_minus(&crate::chain_model::grad_plus(q));
        for _ in 0..steps {
            let f = force(&q);
            for x in 0..n {
                p[x] += 0.5 * h * f[x];
            }
            for x in 0..n {
                q[x] += h * p[x] / c.masses[x];
            }
            let f = force(&q);
            for x in 0..n {
                p[x] += 0.5 * h * f[x];
            }
        }
        let (r1, p1) = evolve_sample(&r0, &p0, &EvolutionMap::new(&s, tau)).unwrap();
        let rq = crate::chain_model::grad_plus(&q);
        for x in 0..n - 1 {
            assert!((r1[x] - rq[x]).abs() < 1e-8);
        }
        for x in 0..n {
            assert!((p1[x] - p[x]).abs() < 1e-8);
        }
    }
}
