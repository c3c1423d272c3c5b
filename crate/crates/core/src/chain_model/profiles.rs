use crate::error::{ChainError, Result};
use crate::quadrature;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Named profile presets. Arbitrary shapes come in through `Tabulated`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum ProfilePreset {
    Equilibrium {
        #[serde(default = "one")]
        beta: f64,
    },
    CosineMomentum {
        amplitude: f64,
        #[serde(default = "one")]
        beta: f64,
    },
    SineElongation {
        amplitude: f64,
        #[serde(default = "one")]
        beta: f64,
    },
    LinearTemperature {
        beta_left: f64,
        beta_right: f64,
    },
    /// Temperature bump: `beta * (1 + amplitude * exp(-(y - center)^2 / (2 width^2)))`.
    GaussianBump {
        #[serde(default = "one")]
        beta: f64,
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// `p_bar = p_amplitude cos(pi y)`, `r_bar = r_amplitude sin(pi y)`.
    MechanicalWave {
        p_amplitude: f64,
        r_amplitude: f64,
        #[serde(default = "one")]
        beta: f64,
    },
    /// Piecewise-linear interpolation on a grid of at least 128 points.
    Tabulated {
        y: Vec<f64>,
        beta: Vec<f64>,
        p_bar: Vec<f64>,
        r_bar: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for ProfilePreset {
    fn default() -> Self {
        ProfilePreset::Equilibrium { beta: 1.0 }
    }
}

/// Inverse temperature, momentum and elongation profiles on `[0, 1]`.
#[derive(Clone)]
pub struct Profiles {
    pub name: String,
    beta: ScalarFn,
    p_bar: ScalarFn,
    r_bar: ScalarFn,
    beta_minus: f64,
    beta_plus: f64,
    /// Kinks of piecewise-linear profiles, used to split quadrature panels.
    breakpoints: Option<Arc<Vec<f64>>>,
}

impl fmt::Debug for Profiles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Profiles")
            .field("name", &self.name)
            .field("beta_minus", &self.beta_minus)
            .field("beta_plus", &self.beta_plus)
            .finish()
    }
}

const CHECK_GRID: usize = 4097;

impl Profiles {
    /// Builds profiles from closures, checking the invariants on a fine grid.
    pub fn from_fns(name: impl Into<String>, beta: ScalarFn, p_bar: ScalarFn, r_bar: ScalarFn) -> Result<Self> {
        let name = name.into();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..CHECK_GRID {
            let y = i as f64 / (CHECK_GRID - 1) as f64;
            let b = beta(y);
            if !(b.is_finite() && b > 0.0) {
                return Err(ChainError::InvalidProfile(format!(
                    "{name}: beta({y}) = {b} is not a positive number"
                )));
            }
            lo = lo.min(b);
            hi = hi.max(b);
            if !p_bar(y).is_finite() || !r_bar(y).is_finite() {
                return Err(ChainError::InvalidProfile(format!("{name}: non-finite value at y = {y}")));
            }
        }
        for y in [0.0, 1.0] {
            if r_bar(y).abs() > 1e-12 {
                return Err(ChainError::InvalidProfile(format!(
                    "{name}: r_bar({y}) = {} must vanish at the ends",
                    r_bar(y)
                )));
            }
        }
        Ok(Profiles {
            name,
            beta,
            p_bar,
            r_bar,
            beta_minus: lo,
            beta_plus: hi,
            breakpoints: None,
        })
    }

    pub fn breakpoints(&self) -> Option<&[f64]> {
        self.breakpoints.as_deref().map(|v| v.as_slice())
    }

    pub fn beta(&self, y: f64) -> f64 {
        (self.beta)(y)
    }

    pub fn p_bar(&self, y: f64) -> f64 {
        (self.p_bar)(y)
    }

    pub fn r_bar(&self, y: f64) -> f64 {
        (self.r_bar)(y)
    }

    pub fn beta_fn(&self) -> ScalarFn {
        self.beta.clone()
    }

    pub fn p_bar_fn(&self) -> ScalarFn {
        self.p_bar.clone()
    }

    pub fn r_bar_fn(&self) -> ScalarFn {
        self.r_bar.clone()
    }

    /// Lower bound of beta over `[0, 1]` (grid minimum).
    pub fn beta_minus(&self) -> f64 {
        self.beta_minus
    }

    pub fn beta_plus(&self) -> f64 {
        self.beta_plus
    }

    pub fn p_bar_integral(&self) -> f64 {
        let p = self.p_bar.clone();
        quadrature::integrate_pieces(move |y| p(y), self.breakpoints(), 1e-13)
            .map(|r| r.value)
            .unwrap_or(f64::NAN)
    }

    /// Quantum states need a momentum profile with zero integral.
    pub fn check_quantum(&self) -> Result<()> {
        let i = self.p_bar_integral();
        if i.abs() > 1e-10 {
            return Err(ChainError::InvalidProfile(format!(
                "{}: quantum use needs zero-mean momentum profile, integral is {i:e}",
                self.name
            )));
        }
        Ok(())
    }

    /// Replaces the inverse temperature keeping the mechanical profiles.
    pub fn with_beta(&self, beta: ScalarFn) -> Result<Self> {
        let mut out = Profiles::from_fns(self.name.clone(), beta, self.p_bar.clone(), self.r_bar.clone())?;
        out.breakpoints = self.breakpoints.clone();
        Ok(out)
    }
}

fn constant(c: f64) -> ScalarFn {
    Arc::new(move |_| c)
}

fn check_positive(name: &str, b: f64) -> Result<()> {
    if b.is_finite() && b > 0.0 {
        Ok(())
    } else {
        Err(ChainError::InvalidProfile(format!("{name}: beta = {b} must be positive")))
    }
}

/// A single tabulated function on `[0, 1]` with linear interpolation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tabulated {
    pub y: Vec<f64>,
    pub v: Vec<f64>,
}

impl Tabulated {
    pub fn new(y: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if y.len() < 2 || y.len() != v.len() || y.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ChainError::InvalidProfile("tabulated: need a strictly increasing grid".into()));
        }
        Ok(Tabulated { y, v })
    }

    pub fn to_fn(&self) -> ScalarFn {
        interpolate(Arc::new(self.y.clone()), Arc::new(self.v.clone()))
    }

    pub fn eval(&self, y: f64) -> f64 {
        (self.to_fn())(y)
    }
}

/// Linear interpolation on a sorted grid, clamped at the ends.
fn interpolate(ys: Arc<Vec<f64>>, vs: Arc<Vec<f64>>) -> ScalarFn {
    Arc::new(move |y| {
        let n = ys.len();
        if y <= ys[0] {
            return vs[0];
        }
        if y >= ys[n - 1] {
            return vs[n - 1];
        }
        let j = ys.partition_point(|&g| g <= y);
        let (y0, y1) = (ys[j - 1], ys[j]);
        let w = (y - y0) / (y1 - y0);
        vs[j - 1] * (1.0 - w) + vs[j] * w
    })
}

pub fn sample_profiles(preset: &ProfilePreset) -> Result<Profiles> {
    use std::f64::consts::PI;
    match preset.clone() {
        ProfilePreset::Equilibrium { beta } => {
            check_positive("equilibrium", beta)?;
            Profiles::from_fns("equilibrium", constant(beta), constant(0.0), constant(0.0))
        }
        ProfilePreset::CosineMomentum { amplitude, beta } => {
            check_positive("cosine-momentum", beta)?;
            Profiles::from_fns(
                "cosine-momentum",
                constant(beta),
                Arc::new(move |y| amplitude * (PI * y).cos()),
                constant(0.0),
            )
        }
        ProfilePreset::SineElongation { amplitude, beta } => {
            check_positive("sine-elongation", beta)?;
            Profiles::from_fns(
                "sine-elongation",
                constant(beta),
                constant(0.0),
                Arc::new(move |y| {
                    // sin(pi) is 1.2e-16, not 0; pin the ends exactly.
                    if y <= 0.0 || y >= 1.0 {
                        0.0
                    } else {
                        amplitude * (PI * y).sin()
                    }
                }),
            )
        }
        ProfilePreset::LinearTemperature { beta_left, beta_right } => {
            check_positive("linear-temperature", beta_left)?;
            check_positive("linear-temperature", beta_right)?;
            Profiles::from_fns(
                "linear-temperature",
                Arc::new(move |y| beta_left + (beta_right - beta_left) * y),
                constant(0.0),
                constant(0.0),
            )
        }
        ProfilePreset::GaussianBump {
            beta,
            amplitude,
            center,
            width,
        } => {
            check_positive("gaussian-bump", beta)?;
            if !(width > 0.0) {
                return Err(ChainError::InvalidProfile("gaussian-bump: width must be positive".into()));
            }
            Profiles::from_fns(
                "gaussian-bump",
                Arc::new(move |y| {
                    let z = (y - center) / width;
                    beta * (1.0 + amplitude * (-0.5 * z * z).exp())
                }),
                constant(0.0),
                constant(0.0),
            )
        }
        ProfilePreset::MechanicalWave {
            p_amplitude,
            r_amplitude,
            beta,
        } => {
            check_positive("mechanical-wave", beta)?;
            Profiles::from_fns(
                "mechanical-wave",
                constant(beta),
                Arc::new(move |y| p_amplitude * (PI * y).cos()),
                Arc::new(move |y| {
                    if y <= 0.0 || y >= 1.0 {
                        0.0
                    } else {
                        r_amplitude * (PI * y).sin()
                    }
                }),
            )
        }
        ProfilePreset::Tabulated { y, beta, p_bar, r_bar } => {
            let g = y.len();
            if g < 128 {
                return Err(ChainError::InvalidProfile(format!(
                    "tabulated: grid has {g} points, need at least 128"
                )));
            }
            if beta.len() != g || p_bar.len() != g || r_bar.len() != g {
                return Err(ChainError::InvalidProfile("tabulated: column lengths differ".into()));
            }
            if y[0] != 0.0 || y[g - 1] != 1.0 || y.windows(2).any(|w| w[1] <= w[0]) {
                return Err(ChainError::InvalidProfile(
                    "tabulated: grid must increase strictly from 0 to 1".into(),
                ));
            }
            let ys = Arc::new(y);
            let mut out = Profiles::from_fns(
                "tabulated",
                interpolate(ys.clone(), Arc::new(beta)),
                interpolate(ys.clone(), Arc::new(p_bar)),
                interpolate(ys.clone(), Arc::new(r_bar)),
            )?;
            out.breakpoints = Some(ys);
            Ok(out)
        }
    }
}

/// Test functions used in the empirical functionals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestFunction {
    Constant,
    /// `sin(pi y)`.
    Sin,
    /// Smooth compactly supported bump centred at 1/2 with half-width 1/4.
    Bump,
}

impl TestFunction {
    pub fn eval(&self, y: f64) -> f64 {
        match self {
            TestFunction::Constant => 1.0,
            TestFunction::Sin => (std::f64::consts::PI * y).sin(),
            TestFunction::Bump => {
                let z = (y - 0.5) / 0.25;
                if z.abs() >= 1.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / (1.0 - z * z)).exp()
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TestFunction::Constant => "constant",
            TestFunction::Sin => "sin",
            TestFunction::Bump => "bump",
        }
    }

    /// Values `f(x/n)` on the sites `x = 1..=len`.
    pub fn on_sites(&self, n: usize, len: usize) -> Vec<f64> {
        (1..=len).map(|x| self.eval(x as f64 / n as f64)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equilibrium_preset() {
        let p = sample_profiles(&ProfilePreset::Equilibrium { beta: 1.0 }).unwrap();
        for y in [0.0, 0.3, 1.0] {
            assert_eq!(p.beta(y), 1.0);
            assert_eq!(p.p_bar(y), 0.0);
            assert_eq!(p.r_bar(y), 0.0);
        }
    }

    #[test]
    fn cosine_momentum_has_zero_mean() {
        let p = sample_profiles(&ProfilePreset::CosineMomentum { amplitude: 0.7, beta: 2.0 }).unwrap();
        assert!((p.p_bar(0.25) - 0.7 * (std::f64::consts::PI / 4.0).cos()).abs() < 1e-15);
        assert!(p.p_bar_integral().abs() < 1e-13);
        p.check_quantum().unwrap();
    }

    #[test]
    fn sine_elongation_vanishes_at_ends() {
        let p = sample_profiles(&ProfilePreset::SineElongation { amplitude: 1.3, beta: 1.0 }).unwrap();
        assert_eq!(p.r_bar(0.0), 0.0);
        assert_eq!(p.r_bar(1.0), 0.0);
        assert!((p.r_bar(0.5) - 1.3).abs() < 1e-15);
    }

    #[test]
    fn rejects_invalid_profiles() {
        assert!(sample_profiles(&ProfilePreset::Equilibrium { beta: 0.0 }).is_err());
        assert!(sample_profiles(&ProfilePreset::LinearTemperature { beta_left: 1.0, beta_right: -1.0 }).is_err());
        let bad_r = Profiles::from_fns("bad", constant(1.0), constant(0.0), constant(0.1));
        assert!(bad_r.is_err());
        let short = ProfilePreset::Tabulated {
            y: vec![0.0, 1.0],
            beta: vec![1.0, 1.0],
            p_bar: vec![0.0, 0.0],
            r_bar: vec![0.0, 0.0],
        };
        assert!(sample_profiles(&short).is_err());
        let p = sample_profiles(&ProfilePreset::MechanicalWave { p_amplitude: 0.3, r_amplitude: 0.2, beta: 1.0 })
            .unwrap();
        p.check_quantum().unwrap();
        let biased = Profiles::from_fns("biased", constant(1.0), constant(0.5), constant(0.0)).unwrap();
        assert!(biased.check_quantum().is_err());
    }

    #[test]
    fn tabulated_interpolates_linearly() {
        let g = 129;
        let y: Vec<f64> = (0..g).map(|i| i as f64 / (g - 1) as f64).collect();
        let beta: Vec<f64> = y.iter().map(|y| 1.0 + y).collect();
        let p_bar: Vec<f64> = y.iter().map(|y| y * y).collect();
        let r_bar: Vec<f64> = y.iter().map(|y| y * (1.0 - y)).collect();
        let p = sample_profiles(&ProfilePreset::Tabulated { y, beta, p_bar, r_bar }).unwrap();
        assert!((p.beta(0.3) - 1.3).abs() < 1e-14);
        // Piecewise-linear: error of y^2 at most h^2/4.
        let h = 1.0 / 128.0;
        assert!((p.p_bar(0.3) - 0.09).abs() <= h * h / 4.0 + 1e-15);
        assert_eq!(p.beta_minus(), 1.0);
        assert_eq!(p.beta_plus(), 2.0);
    }

    #[test]
    fn test_functions() {
        assert_eq!(TestFunction::Constant.eval(0.7), 1.0);
        assert!((TestFunction::Sin.eval(0.5) - 1.0).abs() < 1e-15);
        assert!((TestFunction::Bump.eval(0.5) - 1.0).abs() < 1e-15);
        assert_eq!(TestFunction::Bump.eval(0.2), 0.0);
        assert_eq!(TestFunction::Bump.eval(0.75), 0.0);
        assert!(TestFunction::Bump.eval(0.74) > 0.0);
    }

    proptest! {
        #[test]
        fn bump_profile_respects_beta_bounds(amp in 0.0f64..3.0, c in 0.0f64..1.0, w in 0.02f64..0.5, b in 0.1f64..5.0) {
            let p = sample_profiles(&ProfilePreset::GaussianBump { beta: b, amplitude: amp, center: c, width: w }).unwrap();
            prop_assert!(p.beta_minus() >= b * (1.0 - 1e-12));
            prop_assert!(p.beta_plus() <= b * (1.0 + amp) * (1.0 + 1e-12));
            for i in 0..=64 {
                let y = i as f64 / 64.0;
                prop_assert!(p.beta(y) >= p.beta_minus() - 1e-12);
            }
        }
    }
}
