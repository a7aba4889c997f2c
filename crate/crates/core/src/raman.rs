//! Nonlinear response of the fibre and the Raman reservoir noise.
//!
//! The response `h(τ) = f_e·δ(τ) + h_R(τ)` combines an instantaneous
//! electronic part with a causal Raman part built from damped-oscillator
//! (Lorentzian) modes. The total is normalized to `h̃(0) = 1`, which keeps
//! `A·sech(τ)` with `A = 1` a stationary soliton regardless of the split.
//!
//! In the dimensionless units the Raman gain is `α^R(ω) = 2·Im h̃(ω)` for
//! `ω > 0`, and the reservoir noise `Γ_σ` has the symmetrized spectral density
//! `S(ω) = α^R(|ω|)·(n_th(|ω|) + 1/2)/n̄`, white in `ζ`.

use std::io::Read;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::grid::SimGrid;
use crate::units::{PhysicalParams, BOLTZMANN, HBAR};

/// Multi-Lorentzian fit of the fused-silica Raman gain shipped with the crate.
pub const DEFAULT_SILICA_CSV: &str = include_str!("../data/raman_silica.csv");

/// Electronic share of the nonlinearity when none is configured (`1 - f_R`, `f_R = 0.18`).
pub const DEFAULT_INSTANTANEOUS_FRACTION: f64 = 0.82;

/// One damped-oscillator Raman mode, in units of `1/t0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lorentzian {
    /// Natural angular frequency `Ω0`.
    pub center: f64,
    /// Full width at half maximum of the gain line (angular); the damping rate is `width/2`.
    pub width: f64,
    /// Relative weight; weights are normalized over all modes.
    pub strength: f64,
}

impl Lorentzian {
    /// Unit-area impulse response of the mode at lag `tau` (zero for `tau < 0`).
    pub fn impulse(&self, tau: f64) -> f64 {
        if tau < 0.0 {
            return 0.0;
        }
        let w0 = self.center;
        let gamma = 0.5 * self.width;
        let decay = (-gamma * tau).exp();
        let d = w0 * w0 - gamma * gamma;
        if d > 1e-12 * w0 * w0 {
            let w = d.sqrt();
            w0 * w0 / w * decay * (w * tau).sin()
        } else if d < -1e-12 * w0 * w0 {
            let k = (-d).sqrt();
            // e^{-γτ} sinh(kτ) written to avoid overflow of sinh at large lag
            w0 * w0 / k * 0.5 * ((-(gamma - k) * tau).exp() - (-(gamma + k) * tau).exp())
        } else {
            w0 * w0 * tau * decay
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RamanModel {
    pub lorentzians: Vec<Lorentzian>,
    /// Weight of the instantaneous electronic response, in `[0, 1]`.
    pub instantaneous_fraction: f64,
}

impl RamanModel {
    /// Pure instantaneous Kerr response, `h(τ) = δ(τ)`.
    pub fn instantaneous() -> Self {
        Self { lorentzians: Vec::new(), instantaneous_fraction: 1.0 }
    }

    pub fn new(lorentzians: Vec<Lorentzian>, instantaneous_fraction: f64) -> Result<Self> {
        let model = Self { lorentzians, instantaneous_fraction };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let fe = self.instantaneous_fraction;
        if !(0.0..=1.0).contains(&fe) {
            return Err(Error::Validation(format!("instantaneous_fraction must lie in [0, 1], got {fe}")));
        }
        for (i, l) in self.lorentzians.iter().enumerate() {
            if !(l.center.is_finite() && l.center > 0.0) {
                return Err(Error::Validation(format!("Raman mode {i}: center must be positive")));
            }
            if !(l.width.is_finite() && l.width > 0.0) {
                return Err(Error::Validation(format!("Raman mode {i}: width must be positive")));
            }
            if !(l.strength.is_finite() && l.strength >= 0.0) {
                return Err(Error::Validation(format!("Raman mode {i}: strength must be >= 0")));
            }
        }
        if fe < 1.0 && self.total_strength() <= 0.0 {
            return Err(Error::Validation(
                "instantaneous_fraction < 1 needs at least one Raman mode with positive strength".into(),
            ));
        }
        Ok(())
    }

    fn total_strength(&self) -> f64 {
        self.lorentzians.iter().map(|l| l.strength).sum()
    }

    /// Continuous Raman impulse response `h_R(τ)`, integrating to `1 - f_e`.
    pub fn raman_impulse(&self, tau: f64) -> f64 {
        let total = self.total_strength();
        if total <= 0.0 {
            return 0.0;
        }
        let scale = (1.0 - self.instantaneous_fraction) / total;
        self.lorentzians.iter().map(|l| scale * l.strength * l.impulse(tau)).sum()
    }

    /// Reads modes from CSV (`center_thz,width_thz,strength`; `#` starts a comment line).
    pub fn from_csv<R: Read>(reader: R, params: &PhysicalParams, instantaneous_fraction: f64) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            center_thz: f64,
            width_thz: f64,
            strength: f64,
        }
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut modes = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let row = row?;
            modes.push(Lorentzian {
                center: params.thz_to_omega(row.center_thz),
                width: params.thz_to_omega(row.width_thz),
                strength: row.strength,
            });
        }
        Self::new(modes, instantaneous_fraction)
    }

    pub fn from_csv_path(path: &Path, params: &PhysicalParams, instantaneous_fraction: f64) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Config(format!("cannot open Raman file {}: {e}", path.display())))?;
        Self::from_csv(file, params, instantaneous_fraction)
    }

    /// The shipped fused-silica decomposition.
    pub fn silica(params: &PhysicalParams, instantaneous_fraction: f64) -> Result<Self> {
        Self::from_csv(DEFAULT_SILICA_CSV.as_bytes(), params, instantaneous_fraction)
    }
}

/// Nonlinear response sampled on a grid.
#[derive(Clone, Debug)]
pub struct Response {
    /// `h̃(ω_k)`, FFT order.
    spectrum: Vec<Complex64>,
    instantaneous_fraction: f64,
    /// True when `h̃` is frequency independent (no Raman part).
    flat: bool,
}

impl Response {
    /// Pure Kerr response on `grid` (`h̃ ≡ 1`).
    pub fn instantaneous(grid: &SimGrid) -> Self {
        Self {
            spectrum: vec![Complex64::new(1.0, 0.0); grid.n_points()],
            instantaneous_fraction: 1.0,
            flat: true,
        }
    }

    pub fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    pub fn is_instantaneous(&self) -> bool {
        self.flat
    }

    /// Raman gain `α^R(|ω_k|) = 2·Im h̃(|ω_k|)` per bin, clipped at zero.
    pub fn gain(&self) -> Vec<f64> {
        let n = self.spectrum.len();
        (0..n)
            .map(|k| {
                // positive-frequency partner of bin k
                let kp = if k <= n / 2 { k } else { n - k };
                let im = if kp == n / 2 { self.spectrum[kp].im.abs() } else { self.spectrum[kp].im };
                (2.0 * im).max(0.0)
            })
            .collect()
    }

    /// Raman impulse response `h_R` on lags `m·dτ`, FFT (lag) order.
    pub fn raman_time_domain(&self, grid: &SimGrid) -> Vec<Complex64> {
        let n = grid.n_points();
        let mut buf: Vec<Complex64> = self
            .spectrum
            .iter()
            .map(|v| (v - self.instantaneous_fraction) / (n as f64 * grid.d_tau()))
            .collect();
        let mut scratch = grid.scratch();
        grid.raw_to_time(&mut buf, &mut scratch);
        buf
    }
}

/// Samples the response on `grid` and returns `h̃(ω)`.
///
/// The Raman part is sampled on lags `0 ≤ τ < T/2` (causal on the periodic
/// grid), rescaled so that its discrete integral is exactly `1 - f_e`, and
/// transformed; `h̃(-ω) = h̃(ω)*` holds by construction.
pub fn build_response(model: &RamanModel, grid: &SimGrid) -> Result<Response> {
    model.validate()?;
    let n = grid.n_points();
    let fe = model.instantaneous_fraction;
    if fe >= 1.0 {
        return Ok(Response::instantaneous(grid));
    }
    let dt = grid.d_tau();
    let mut lag: Vec<Complex64> = (0..n)
        .map(|m| {
            let v = if m < n / 2 { model.raman_impulse(m as f64 * dt) } else { 0.0 };
            Complex64::new(v, 0.0)
        })
        .collect();
    let area: f64 = lag.iter().map(|v| v.re).sum::<f64>() * dt;
    if !(area.is_finite() && area > 0.0) {
        return Err(Error::Validation(format!(
            "Raman response is not resolved on the grid (discrete area {area})"
        )));
    }
    let scale = (1.0 - fe) / area * dt;
    for v in lag.iter_mut() {
        *v *= scale;
    }
    let mut scratch = grid.scratch();
    grid.raw_to_spectrum(&mut lag, &mut scratch);
    // Nyquist bin is its own partner
    lag[n / 2].im = 0.0;
    for v in lag.iter_mut() {
        v.re += fe;
    }
    Ok(Response { spectrum: lag, instantaneous_fraction: fe, flat: false })
}

/// Bose occupation `1/(exp(ħω/k_B T) - 1)` for an angular frequency in rad/s.
pub fn bose_occupation(omega_si: f64, temperature: f64) -> f64 {
    let w = omega_si.abs();
    if temperature <= 0.0 {
        return 0.0;
    }
    if w == 0.0 {
        return f64::INFINITY;
    }
    1.0 / (HBAR * w / (BOLTZMANN * temperature)).exp_m1()
}

/// Thermal phonon occupations `n_th(|ω_k|)` on the grid.
#[derive(Clone, Debug)]
pub struct ThermalSpectrum {
    occupation: Vec<f64>,
}

impl ThermalSpectrum {
    pub fn new(grid: &SimGrid, params: &PhysicalParams) -> Self {
        let occupation = grid
            .omega()
            .iter()
            .map(|w| bose_occupation(params.omega_to_si(*w), params.temperature))
            .collect();
        Self { occupation }
    }

    pub fn occupation(&self) -> &[f64] {
        &self.occupation
    }

    /// Symmetrically ordered reservoir weight `n_th + 1/2`.
    pub fn wigner_weight(&self) -> Vec<f64> {
        self.occupation.iter().map(|n| n + 0.5).collect()
    }
}

/// Noise spectral density `S(ω_k) = α^R(|ω_k|)·(n_th(|ω_k|) + 1/2)/n̄`.
pub fn raman_gain(response: &Response, thermal: &ThermalSpectrum, nbar: f64) -> Vec<f64> {
    response
        .gain()
        .iter()
        .zip(thermal.occupation())
        .map(|(&alpha, &nth)| if alpha == 0.0 { 0.0 } else { alpha * (nth + 0.5) / nbar })
        .collect()
}

/// Spectral filter that turns white Gaussian noise into `Γ` for one step `dζ`.
#[derive(Clone, Debug)]
pub struct RamanNoise {
    /// Per-bin amplitude for a complex draw whose real and imaginary parts are
    /// the two (independent) polarizations.
    amplitude: Vec<f64>,
    silent: bool,
}

impl RamanNoise {
    pub fn new(grid: &SimGrid, spectral_density: &[f64], d_zeta: f64) -> Result<Self> {
        if spectral_density.len() != grid.n_points() {
            return Err(Error::Contract("noise spectrum length does not match grid".into()));
        }
        if !(d_zeta.is_finite() && d_zeta > 0.0) {
            return Err(Error::Domain(format!("d_zeta must be positive, got {d_zeta}")));
        }
        let norm = 2.0 / (grid.tau_window() * d_zeta);
        let amplitude: Vec<f64> = spectral_density.iter().map(|s| (norm * s.max(0.0)).sqrt()).collect();
        let silent = amplitude.iter().all(|&a| a == 0.0);
        Ok(Self { amplitude, silent })
    }

    pub fn is_silent(&self) -> bool {
        self.silent
    }

    /// Fills `buf` with `Γ_x + iΓ_y`.
    pub fn sample_pair<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        grid: &SimGrid,
        buf: &mut [Complex64],
        scratch: &mut [Complex64],
    ) {
        if self.silent {
            buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            return;
        }
        // each component of Z has variance 1/2
        const H: f64 = std::f64::consts::FRAC_1_SQRT_2;
        for (v, &a) in buf.iter_mut().zip(&self.amplitude) {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v = Complex64::new(a * H * re, a * H * im);
        }
        grid.raw_to_time(buf, scratch);
    }
}

/// One real noise realization `Γ(τ)` for a step `d_zeta`.
pub fn sample_raman_noise<R: Rng + ?Sized>(
    rng: &mut R,
    grid: &SimGrid,
    spectral_density: &[f64],
    d_zeta: f64,
) -> Result<Vec<f64>> {
    let noise = RamanNoise::new(grid, spectral_density, d_zeta)?;
    let mut buf = vec![Complex64::new(0.0, 0.0); grid.n_points()];
    let mut scratch = grid.scratch();
    noise.sample_pair(rng, grid, &mut buf, &mut scratch);
    Ok(buf.iter().map(|v| v.re).collect())
}
