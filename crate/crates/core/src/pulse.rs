//! Initial stochastic fields: a coherent sech pulse in each polarization plus
//! Wigner vacuum fluctuations of half a quantum per mode.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::SimGrid;

/// The two polarization fields at propagation position `zeta`.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldState {
    pub phi_x: Vec<Complex64>,
    pub phi_y: Vec<Complex64>,
    pub zeta: f64,
}

impl FieldState {
    pub fn new(phi_x: Vec<Complex64>, phi_y: Vec<Complex64>, zeta: f64) -> Result<Self> {
        if phi_x.len() != phi_y.len() {
            return Err(Error::Contract("polarization fields differ in length".into()));
        }
        Ok(Self { phi_x, phi_y, zeta })
    }

    /// Both polarizations carry the same mean field.
    pub fn from_mean(mean: &[Complex64]) -> Self {
        Self { phi_x: mean.to_vec(), phi_y: mean.to_vec(), zeta: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.phi_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi_x.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.phi_x.iter().chain(&self.phi_y).all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Photon numbers `(N_x, N_y) = n̄·Σ|φ_σ|²·dτ`.
    pub fn photon_numbers(&self, grid: &SimGrid, nbar: f64) -> (f64, f64) {
        (nbar * grid.norm_sq(&self.phi_x), nbar * grid.norm_sq(&self.phi_y))
    }
}

/// Mean field `A·sech(τ)` centred in the window.
pub fn coherent_sech(amplitude: f64, grid: &SimGrid) -> Result<Vec<Complex64>> {
    if !(amplitude.is_finite() && amplitude >= 0.0) {
        return Err(Error::Domain(format!("amplitude must be >= 0, got {amplitude}")));
    }
    Ok(grid
        .tau()
        .iter()
        .map(|t| Complex64::new(amplitude / t.cosh(), 0.0))
        .collect())
}

/// Standard deviation of each quadrature of the vacuum noise at one grid point.
pub fn vacuum_quadrature_sigma(grid: &SimGrid, nbar: f64) -> f64 {
    (1.0 / (4.0 * nbar * grid.d_tau())).sqrt()
}

/// Adds independent complex Gaussian noise with `⟨|Δφ|²⟩ = 1/(2·n̄·dτ)` to
/// every grid point of both polarizations.
pub fn add_vacuum_noise<R: Rng + ?Sized>(
    mean: &[Complex64],
    rng: &mut R,
    grid: &SimGrid,
    nbar: f64,
) -> Result<FieldState> {
    if !(nbar.is_finite() && nbar > 0.0) {
        return Err(Error::Domain(format!("nbar must be positive, got {nbar}")));
    }
    if mean.len() != grid.n_points() {
        return Err(Error::Contract("mean field length does not match grid".into()));
    }
    let sigma = vacuum_quadrature_sigma(grid, nbar);
    let mut noisy = |m: &Complex64| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        m + Complex64::new(sigma * re, sigma * im)
    };
    let phi_x: Vec<Complex64> = mean.iter().map(&mut noisy).collect();
    let phi_y: Vec<Complex64> = mean.iter().map(&mut noisy).collect();
    Ok(FieldState { phi_x, phi_y, zeta: 0.0 })
}
