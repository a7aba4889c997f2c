//! Physical constants, experimental parameters and the mapping between
//! laboratory units and the dimensionless propagation variables.
//!
//! The simulation works in a co-moving frame: time is measured in units of
//! the pulse scale `t0`, distance in units of the dispersion length `z0`, and
//! the photon-flux field is scaled so that a mean field `A·sech(τ)` with
//! `A = 1` carries `2·n̄` photons and propagates as the fundamental soliton.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planck constant (J s).
pub const PLANCK: f64 = 6.626_070_150_00e-34;
/// Reduced Planck constant (J s).
pub const HBAR: f64 = PLANCK / (2.0 * std::f64::consts::PI);
/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380_649_000_00e-23;

pub const PICOJOULE: f64 = 1e-12;
pub const FEMTOSECOND: f64 = 1e-15;
pub const MICROMETRE: f64 = 1e-6;
pub const TERAHERTZ: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Pulse time scale (s). This is the sech width entering `z0 = t0²/|k''|`.
    pub t0: f64,
    /// Dispersion length (m).
    pub z0: f64,
    /// Photon-number scale; a fundamental sech soliton holds `2·nbar` photons.
    pub nbar: f64,
    /// Carrier wavelength (m).
    pub lambda0: f64,
    /// Phonon reservoir temperature (K).
    pub temperature: f64,
    /// Fibre length (m).
    pub fiber_length: f64,
    /// Linear loss in the detection path, in `[0, 1)`.
    pub loss_fraction: f64,
}

impl Default for PhysicalParams {
    /// 74 fs pulses at 1.51 μm in the 13.4 m fibre, room temperature, 24 % detection loss.
    fn default() -> Self {
        Self {
            t0: 74.0 * FEMTOSECOND,
            z0: 0.52,
            nbar: 2e8,
            lambda0: 1.51 * MICROMETRE,
            temperature: 300.0,
            fiber_length: 13.4,
            loss_fraction: 0.24,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("t0", self.t0),
            ("z0", self.z0),
            ("nbar", self.nbar),
            ("lambda0", self.lambda0),
            ("fiber_length", self.fiber_length),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Validation(format!("{name} must be positive and finite, got {value}")));
            }
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::Validation(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if !(0.0..1.0).contains(&self.loss_fraction) {
            return Err(Error::Validation(format!(
                "loss_fraction must lie in [0, 1), got {}",
                self.loss_fraction
            )));
        }
        let k2 = self.dispersion_k2();
        if !(k2.is_finite() && k2 > 0.0) {
            return Err(Error::Validation(format!("derived |k''| = {k2} is not positive and finite")));
        }
        Ok(())
    }

    /// Group-velocity dispersion magnitude `|k''| = t0²/z0` (s²/m).
    pub fn dispersion_k2(&self) -> f64 {
        self.t0 * self.t0 / self.z0
    }

    /// Carrier angular frequency `2πc/λ0` (rad/s).
    pub fn carrier_omega(&self) -> f64 {
        2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / self.lambda0
    }

    /// Converts an angular frequency in units of `1/t0` to rad/s.
    pub fn omega_to_si(&self, omega: f64) -> f64 {
        omega / self.t0
    }

    /// Converts an ordinary frequency in THz to an angular frequency in units of `1/t0`.
    pub fn thz_to_omega(&self, freq_thz: f64) -> f64 {
        2.0 * std::f64::consts::PI * freq_thz * TERAHERTZ * self.t0
    }

    pub fn with_fiber_length(mut self, fiber_length: f64) -> Self {
        self.fiber_length = fiber_length;
        self
    }
}

/// Input pulse pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    /// Total energy of both polarization pulses (J).
    pub energy_total: f64,
    /// x–y relative phase applied at detection (rad).
    pub relative_phase: f64,
}

impl PulseSpec {
    pub fn new(energy_total: f64) -> Result<Self> {
        if !(energy_total.is_finite() && energy_total >= 0.0) {
            return Err(Error::Domain(format!("pulse energy must be >= 0, got {energy_total}")));
        }
        Ok(Self { energy_total, relative_phase: std::f64::consts::FRAC_PI_2 })
    }
}

/// Number of photons in a pulse of total energy `energy_total` (J) at wavelength `lambda0` (m).
pub fn photon_number(energy_total: f64, lambda0: f64) -> Result<f64> {
    if !(energy_total.is_finite() && energy_total >= 0.0) {
        return Err(Error::Domain(format!("pulse energy must be >= 0, got {energy_total}")));
    }
    if !(lambda0.is_finite() && lambda0 > 0.0) {
        return Err(Error::Domain(format!("wavelength must be positive, got {lambda0}")));
    }
    Ok(energy_total * lambda0 / (PLANCK * SPEED_OF_LIGHT))
}

/// Inverse of [`photon_number`].
pub fn pulse_energy(photons: f64, lambda0: f64) -> f64 {
    photons * PLANCK * SPEED_OF_LIGHT / lambda0
}

/// Dimensionless sech amplitude of each polarization pulse.
///
/// The pair energy is split evenly; `A = sqrt(N_pol / (2 n̄))`.
pub fn soliton_amplitude(energy_total: f64, params: &PhysicalParams) -> Result<f64> {
    params.validate()?;
    let per_pol = photon_number(energy_total, params.lambda0)? / 2.0;
    Ok((per_pol / (2.0 * params.nbar)).sqrt())
}

/// Fibre length in units of the dispersion length.
pub fn dimensionless_length(params: &PhysicalParams) -> f64 {
    params.fiber_length / params.z0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn photon_numbers() {
        assert_eq!(photon_number(0.0, 1.51e-6).unwrap(), 0.0);
        // E·λ/(h·c) evaluated by hand: 53.5e-12·1.51e-6/1.98644586e-25
        assert!(rel(photon_number(53.5e-12, 1.51e-6).unwrap(), 4.066_811e8) < 1e-6);
        assert!(rel(photon_number(4.8e-12, 1.51e-6).unwrap(), 3.648_728e7) < 1e-6);
        assert!(matches!(photon_number(-1e-12, 1.51e-6), Err(Error::Domain(_))));
    }

    #[test]
    fn amplitudes() {
        let p = PhysicalParams::default();
        assert_eq!(soliton_amplitude(0.0, &p).unwrap(), 0.0);
        assert!((soliton_amplitude(53.5e-12, &p).unwrap() - 0.713).abs() < 5e-4);
        // fundamental soliton: N_pol = 2 n̄
        let e_sol = pulse_energy(4.0 * p.nbar, p.lambda0);
        assert!((soliton_amplitude(e_sol, &p).unwrap() - 1.0).abs() < 1e-12);
        let a1 = soliton_amplitude(e_sol, &p).unwrap();
        let a4 = soliton_amplitude(4.0 * e_sol, &p).unwrap();
        assert!((a4 - 2.0 * a1).abs() < 1e-12);
    }

    #[test]
    fn lengths_and_dispersion() {
        let p = PhysicalParams::default();
        assert!((dimensionless_length(&p) - 25.769_230_769).abs() < 1e-8);
        assert!((dimensionless_length(&p.with_fiber_length(30.0)) - 57.692_307_692).abs() < 1e-8);
        assert_eq!(dimensionless_length(&p.with_fiber_length(p.z0)), 1.0);
        let k2 = p.dispersion_k2();
        assert!((1.0e-26..=1.1e-26).contains(&k2), "k'' = {k2}");
    }

    #[test]
    fn validation_rejects_bad_params() {
        let mut p = PhysicalParams::default();
        p.loss_fraction = 1.0;
        assert!(p.validate().is_err());
        let mut p = PhysicalParams::default();
        p.t0 = 0.0;
        assert!(p.validate().is_err());
        let mut p = PhysicalParams::default();
        p.temperature = -1.0;
        assert!(p.validate().is_err());
    }

    proptest::proptest! {
        #[test]
        fn energy_round_trip(e in 0.0f64..1e-9, lam in 0.5e-6f64..3e-6) {
            let n = photon_number(e, lam).unwrap();
            let back = pulse_energy(n, lam);
            proptest::prop_assert!(e == 0.0 || ((back - e) / e).abs() < 1e-12);
        }

        #[test]
        fn amplitude_monotone(e1 in 0.0f64..1e-10, de in 1e-15f64..1e-10) {
            let p = PhysicalParams::default();
            proptest::prop_assert!(soliton_amplitude(e1 + de, &p).unwrap() > soliton_amplitude(e1, &p).unwrap());
        }
    }
}
