//! Truncated-Wigner simulation of polarization squeezing in birefringent fibre.

pub mod config;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod phase_noise;
pub mod propagator;
pub mod pulse;
pub mod raman;
pub mod rng;
pub mod stokes;
pub mod units;

pub use error::{Error, Result};
