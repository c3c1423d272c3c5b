//! Disordered harmonic chain laboratory.
//!
//! Random-mass chains with free boundaries, exact normal-mode dynamics of
//! Gaussian (classical) and quasi-free (quantum) states, localization
//! diagnostics and the macroscopic wave system used as the hydrodynamic
//! reference.

pub mod chain_model;
pub mod classical_state;
pub mod dynamics;
pub mod error;
pub mod euler_macro;
pub mod experiments;
pub mod localization;
pub mod quadrature;
pub mod quantum_state;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use error::{ChainError, Result};
