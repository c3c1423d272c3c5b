//! Experiment configuration: TOML file with every key defaulted.

use crate::chain_model::{MassLaw, ProfilePreset, TestFunction};
use crate::error::{ChainError, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Spectrum,
    Localization,
    #[default]
    ClassicalHydro,
    QuantumHydro,
    ConvergenceSweep,
    EulerSolve,
    MonteCarloCheck,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Spectrum => "spectrum",
            Experiment::Localization => "localization",
            Experiment::ClassicalHydro => "classical-hydro",
            Experiment::QuantumHydro => "quantum-hydro",
            Experiment::ConvergenceSweep => "convergence-sweep",
            Experiment::EulerSolve => "euler-solve",
            Experiment::MonteCarloCheck => "monte-carlo-check",
        }
    }
}

/// Either an explicit list or `count` consecutive seeds from `base`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    List(Vec<u64>),
    Range { base: u64, count: usize },
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::Range { base: 0, count: 16 }
    }
}

impl Seeds {
    pub fn list(&self) -> Vec<u64> {
        match self {
            Seeds::List(v) => v.clone(),
            Seeds::Range { base, count } => (0..*count as u64).map(|i| base + i).collect(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Seeds::List(v) => v.len(),
            Seeds::Range { count, .. } => *count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub n_list: Vec<usize>,
    pub seeds: Seeds,
    /// Macroscopic times.
    pub times: Vec<f64>,
    /// Horizon `T`; every time must lie in `[0, T]`.
    pub horizon: f64,
    pub profiles: ProfilePreset,
    pub mass_law: MassLaw,
    pub test_functions: Vec<TestFunction>,
    /// Low/high mode split exponent.
    pub gamma: f64,
    pub theta: f64,
    pub theta_prime: f64,
    /// Localization window exponent.
    pub alpha: f64,
    /// Exponent of the mode set in the frequency-floor scan.
    pub freq_gamma: f64,
    /// Threshold of the Markov certificate.
    pub delta: f64,
    pub mc_samples: usize,
    pub macro_modes: usize,
    pub macro_grid: usize,
    /// Run an equal-mass chain next to every localization scan.
    pub clean_control: bool,
    /// Report the near/far split of the high-mode momentum covariance.
    pub offdiag: bool,
    pub thermal_n: usize,
    pub thermal_seeds: usize,
    pub thermal_seed_base: u64,
    pub thermal_bins: usize,
    pub output_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: Experiment::default(),
            n_list: vec![256, 512, 1024, 2048],
            seeds: Seeds::default(),
            times: vec![0.5],
            horizon: 1.0,
            profiles: ProfilePreset::MechanicalWave {
                p_amplitude: 0.3,
                r_amplitude: 0.2,
                beta: 1.0,
            },
            mass_law: MassLaw::default(),
            test_functions: vec![TestFunction::Sin],
            gamma: 0.2,
            theta: 0.5,
            theta_prime: 0.7,
            alpha: 0.25,
            freq_gamma: 0.3,
            delta: 0.05,
            mc_samples: 100_000,
            macro_modes: 64,
            macro_grid: 512,
            clean_control: true,
            offdiag: false,
            thermal_n: 1024,
            thermal_seeds: 16,
            thermal_seed_base: 1_000_000,
            thermal_bins: 128,
            output_dir: PathBuf::from("out"),
            cache_dir: None,
        }
    }
}

fn bad(msg: String) -> ChainError {
    ChainError::Config(msg)
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| bad(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| bad(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() {
            return Err(bad("n_list is empty".into()));
        }
        if let Some(n) = self.n_list.iter().find(|&&n| n < 8) {
            return Err(bad(format!("chain size {n} too small; need n >= 8")));
        }
        if self.seeds.is_empty() {
            return Err(bad("no seeds".into()));
        }
        if self.times.is_empty() {
            return Err(bad("times is empty".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(bad(format!("horizon {} must be positive", self.horizon)));
        }
        if let Some(t) = self.times.iter().find(|&&t| !(0.0..=self.horizon).contains(&t)) {
            return Err(bad(format!("time {t} outside [0, {}]", self.horizon)));
        }
        let (g, th, thp) = (self.gamma, self.theta, self.theta_prime);
        if !(0.0 < 2.0 * g && 2.0 * g < th && th < thp && thp < 1.0) {
            return Err(bad(format!(
                "need 0 < 2 gamma < theta < theta_prime < 1, got gamma = {g}, theta = {th}, theta_prime = {thp}"
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(bad(format!("alpha = {} must lie in (0, 1/2)", self.alpha)));
        }
        if !(self.freq_gamma > 0.0 && self.freq_gamma < 1.0) {
            return Err(bad(format!("freq_gamma = {} must lie in (0, 1)", self.freq_gamma)));
        }
        if !(self.delta > 0.0) {
            return Err(bad(format!("delta = {} must be positive", self.delta)));
        }
        if self.test_functions.is_empty() {
            return Err(bad("test_functions is empty".into()));
        }
        if self.mc_samples < 2 {
            return Err(bad("mc_samples must be at least 2".into()));
        }
        if self.macro_modes < 64 {
            return Err(bad(format!("macro_modes = {} below 64", self.macro_modes)));
        }
        if self.macro_grid < 8 {
            return Err(bad(format!("macro_grid = {} below 8", self.macro_grid)));
        }
        if self.thermal_seeds < 8 {
            return Err(bad(format!("thermal_seeds = {} below 8", self.thermal_seeds)));
        }
        if self.thermal_bins < 2 || self.thermal_bins > self.thermal_n {
            return Err(bad(format!(
                "thermal_bins = {} must lie in [2, thermal_n = {}]",
                self.thermal_bins, self.thermal_n
            )));
        }
        self.mass_law.validate().map_err(|e| bad(e.to_string()))?;
        crate::chain_model::sample_profiles(&self.profiles).map_err(|e| bad(e.to_string()))?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON of the semantic fields (output locations excluded).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.cache_dir = None;
        // serde_json maps are ordered, so the encoding is canonical.
        let v = serde_json::to_value(&c).expect("config serializes");
        let bytes = serde_json::to_vec(&v).expect("value serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn parses_keys() {
        let c = ExperimentConfig::from_toml_str(
            r#"
experiment = "localization"
n_list = [64, 128]
seeds = { base = 5, count = 3 }
times = [0.25]
test_functions = ["sin", "bump"]

[profiles]
preset = "linear-temperature"
beta_left = 0.5
beta_right = 1.0

[mass_law]
kind = "uniform_interval"
lo = 1.0
hi = 3.0
"#,
        )
        .unwrap();
        assert_eq!(c.experiment, Experiment::Localization);
        assert_eq!(c.seeds.list(), vec![5, 6, 7]);
        assert_eq!(c.test_functions, vec![TestFunction::Sin, TestFunction::Bump]);
        assert_eq!(c.mass_law, MassLaw::UniformInterval { lo: 1.0, hi: 3.0 });
        c.validate().unwrap();
        let list = ExperimentConfig::from_toml_str("seeds = [3, 1]").unwrap();
        assert_eq!(list.seeds.list(), vec![3, 1]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::from_toml_str("unknown_key = 1").is_err());
        let mut c = ExperimentConfig::default();
        c.theta = 0.3;
        assert!(matches!(c.validate(), Err(ChainError::Config(_))));
        let mut c = ExperimentConfig::default();
        c.times = vec![1.5];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.n_list = vec![];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.macro_modes = 10;
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_tracks_semantic_fields_only() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        b.cache_dir = Some(PathBuf::from("cache"));
        assert_eq!(a.hash(), b.hash());
        b.alpha = 0.2;
        assert_ne!(a.hash(), b.hash());
        let mut c = a.clone();
        c.seeds = Seeds::Range { base: 1, count: 16 };
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn toml_round_trip() {
        let a = ExperimentConfig::default();
        let s = a.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&s).unwrap(), a);
    }
}
