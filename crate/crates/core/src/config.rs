//! JSON run configuration. Keys carry their units (`energy_pj`, `t0_fs`, ...);
//! every section except `pulse` may be omitted and falls back to the
//! 13.4 m / 74 fs reference setup.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SimGrid;
use crate::propagator::{Scheme, StepperConfig};
use crate::raman::{RamanModel, DEFAULT_INSTANTANEOUS_FRACTION};
use crate::units::{dimensionless_length, PhysicalParams, FEMTOSECOND, MICROMETRE, PICOJOULE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalSection {
    pub t0_fs: f64,
    pub z0_m: f64,
    pub nbar: f64,
    pub lambda0_um: f64,
    pub temperature_k: f64,
    pub fiber_length_m: f64,
    pub loss_fraction: f64,
}

impl Default for PhysicalSection {
    fn default() -> Self {
        Self::from_params(&PhysicalParams::default())
    }
}

impl PhysicalSection {
    pub fn from_params(p: &PhysicalParams) -> Self {
        Self {
            t0_fs: p.t0 / FEMTOSECOND,
            z0_m: p.z0,
            nbar: p.nbar,
            lambda0_um: p.lambda0 / MICROMETRE,
            temperature_k: p.temperature,
            fiber_length_m: p.fiber_length,
            loss_fraction: p.loss_fraction,
        }
    }

    pub fn to_params(&self) -> Result<PhysicalParams> {
        let p = PhysicalParams {
            t0: self.t0_fs * FEMTOSECOND,
            z0: self.z0_m,
            nbar: self.nbar,
            lambda0: self.lambda0_um * MICROMETRE,
            temperature: self.temperature_k,
            fiber_length: self.fiber_length_m,
            loss_fraction: self.loss_fraction,
        };
        p.validate().map_err(|e| Error::Config(format!("physical: {e}")))?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n_points: usize,
    /// Window length in units of t0.
    pub tau_window: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { n_points: 1024, tau_window: 40.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepperSection {
    /// Step in ζ; chosen from the pulse amplitude when absent.
    pub d_zeta: Option<f64>,
    /// Propagation length in ζ; the fibre length `L/z0` when absent.
    pub zeta_max: Option<f64>,
    /// Observation positions (ζ) for snapshot runs.
    pub snapshots: Vec<f64>,
    pub scheme: Scheme,
    pub vacuum_noise: bool,
    pub raman_noise: bool,
    pub raman_response: bool,
    pub dispersion: bool,
    pub nonlinearity: bool,
}

impl Default for StepperSection {
    fn default() -> Self {
        Self {
            d_zeta: None,
            zeta_max: None,
            snapshots: Vec::new(),
            scheme: Scheme::Strang,
            vacuum_noise: true,
            raman_noise: true,
            raman_response: true,
            dispersion: true,
            nonlinearity: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RamanSection {
    /// Lorentzian table, relative to the config file; built-in silica table when absent.
    pub file: Option<PathBuf>,
    pub instantaneous_fraction: f64,
    /// `false` gives a purely instantaneous Kerr medium.
    pub enabled: bool,
}

impl Default for RamanSection {
    fn default() -> Self {
        Self { file: None, instantaneous_fraction: DEFAULT_INSTANTANEOUS_FRACTION, enabled: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnergyList {
    One(f64),
    Many(Vec<f64>),
}

impl EnergyList {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            EnergyList::One(e) => vec![*e],
            EnergyList::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSection {
    /// Total pulse energy (both polarizations) in pJ.
    pub energy_pj: EnergyList,
    /// Phase applied to the y polarization before detection.
    #[serde(default = "default_relative_phase")]
    pub relative_phase_rad: f64,
}

fn default_relative_phase() -> f64 {
    std::f64::consts::FRAC_PI_2
}

fn default_trajectories() -> usize {
    200
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub physical: PhysicalSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub stepper: StepperSection,
    #[serde(default)]
    pub raman: RamanSection,
    pub pulse: PulseSection,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub fibre_label: String,
}

impl ExperimentConfig {
    /// A config with default sections and the given sweep.
    pub fn with_energies(energy_pj: Vec<f64>) -> Self {
        Self {
            physical: PhysicalSection::default(),
            grid: GridSection::default(),
            stepper: StepperSection::default(),
            raman: RamanSection::default(),
            pulse: PulseSection { energy_pj: EnergyList::Many(energy_pj), relative_phase_rad: default_relative_phase() },
            trajectories: default_trajectories(),
            seed: 0,
            output_dir: default_output_dir(),
            fibre_label: String::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    /// Loads and validates a config file. Relative paths inside it are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(f) = &cfg.raman.file {
            if f.is_relative() {
                cfg.raman.file = Some(base.join(f));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.physical_params()?;
        self.grid()?;
        let energies = self.energies_pj();
        if energies.is_empty() {
            return Err(Error::Config("pulse.energy_pj must not be empty".into()));
        }
        if energies.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::Config("pulse energies must be finite and >= 0".into()));
        }
        if self.trajectories < 2 {
            return Err(Error::Config(format!("trajectories must be >= 2, got {}", self.trajectories)));
        }
        if let Some(dz) = self.stepper.d_zeta {
            if !(dz.is_finite() && dz > 0.0) {
                return Err(Error::Config(format!("stepper.d_zeta must be positive, got {dz}")));
            }
        }
        if let Some(z) = self.stepper.zeta_max {
            if !(z.is_finite() && z >= 0.0) {
                return Err(Error::Config(format!("stepper.zeta_max must be >= 0, got {z}")));
            }
        }
        if self.stepper.snapshots.iter().any(|z| !(z.is_finite() && *z >= 0.0)) {
            return Err(Error::Config("stepper.snapshots must be finite and >= 0".into()));
        }
        if !self.relative_phase().is_finite() {
            return Err(Error::Config("pulse.relative_phase_rad must be finite".into()));
        }
        if let Some(f) = &self.raman.file {
            if !f.is_file() {
                return Err(Error::Config(format!("raman.file {} does not exist", f.display())));
            }
        }
        self.raman_model()?;
        Ok(())
    }

    pub fn physical_params(&self) -> Result<PhysicalParams> {
        self.physical.to_params()
    }

    pub fn grid(&self) -> Result<SimGrid> {
        SimGrid::new(self.grid.n_points, self.grid.tau_window).map_err(|e| Error::Config(format!("grid: {e}")))
    }

    pub fn energies_pj(&self) -> Vec<f64> {
        self.pulse.energy_pj.to_vec()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.energies_pj().iter().map(|e| e * PICOJOULE).collect()
    }

    pub fn relative_phase(&self) -> f64 {
        self.pulse.relative_phase_rad
    }

    pub fn raman_model(&self) -> Result<RamanModel> {
        if !self.raman.enabled {
            return Ok(RamanModel::instantaneous());
        }
        let params = self.physical_params()?;
        let fe = self.raman.instantaneous_fraction;
        let model = match &self.raman.file {
            Some(path) => RamanModel::from_csv_path(path, &params, fe),
            None => RamanModel::silica(&params, fe),
        };
        model.map_err(|e| Error::Config(format!("raman: {e}")))
    }

    pub fn zeta_max(&self) -> Result<f64> {
        match self.stepper.zeta_max {
            Some(z) => Ok(z),
            None => Ok(dimensionless_length(&self.physical_params()?)),
        }
    }

    /// Stepper settings for a pulse of peak amplitude `amplitude`.
    pub fn stepper_config(&self, amplitude: f64) -> StepperConfig {
        let s = &self.stepper;
        StepperConfig {
            d_zeta: s.d_zeta.unwrap_or_else(|| StepperConfig::default_step(amplitude)),
            scheme: s.scheme,
            vacuum_noise: s.vacuum_noise,
            raman_noise: s.raman_noise && self.raman.enabled,
            raman_response: s.raman_response && self.raman.enabled,
            dispersion: s.dispersion,
            nonlinearity: s.nonlinearity,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn minimal_config_uses_reference_setup() {
        let cfg = ExperimentConfig::from_json(r#"{"pulse": {"energy_pj": 53.5}}"#).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.energies_pj(), vec![53.5]);
        assert_eq!(cfg.physical_params().unwrap(), PhysicalParams::default());
        assert_eq!(cfg.grid.n_points, 1024);
        assert_eq!(cfg.trajectories, 200);
        assert!((cfg.zeta_max().unwrap() - 25.769_230_769).abs() < 1e-6);
        assert!((cfg.relative_phase() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn round_trips_through_json() {
        let mut cfg = ExperimentConfig::with_energies(vec![2.0, 10.0]);
        cfg.stepper.snapshots = vec![0.0, 1.0];
        cfg.stepper.scheme = Scheme::Lie;
        let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            r#"{"pulse": {"energy_pj": []}}"#,
            r#"{"pulse": {"energy_pj": 1.0}, "trajectories": 1}"#,
            r#"{"pulse": {"energy_pj": -1.0}}"#,
            r#"{"pulse": {"energy_pj": 1.0}, "grid": {"n_points": 1000}}"#,
            r#"{"pulse": {"energy_pj": 1.0}, "physical": {"loss_fraction": 1.5}}"#,
            r#"{"pulse": {"energy_pj": 1.0}, "raman": {"file": "/nonexistent/raman.csv"}}"#,
            r#"{"pulse": {"energy_pj": 1.0}, "stepper": {"d_zeta": 0.0}}"#,
        ];
        for text in bad {
            let err = ExperimentConfig::from_json(text).and_then(|c| c.validate()).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
        assert!(ExperimentConfig::from_json(r#"{"pulse": {"energy_pj": 1.0}, "colour": 3}"#).is_err());
        assert!(ExperimentConfig::from_json("{}").is_err());
    }

    #[test]
    fn raman_file_resolves_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        let mut f = fs::File::create(dir.path().join("modes.csv")).unwrap();
        writeln!(f, "center_thz,width_thz,strength\n13.2,5.0,1.0").unwrap();
        fs::write(
            dir.path().join("run.json"),
            r#"{"pulse": {"energy_pj": [4.8]}, "raman": {"file": "modes.csv"}}"#,
        )
        .unwrap();
        let cfg = ExperimentConfig::load(&dir.path().join("run.json")).unwrap();
        assert_eq!(cfg.raman_model().unwrap().lorentzians.len(), 1);
    }

    #[test]
    fn disabling_raman_turns_off_delayed_terms() {
        let mut cfg = ExperimentConfig::with_energies(vec![1.0]);
        cfg.raman.enabled = false;
        let s = cfg.stepper_config(1.0);
        assert!(!s.raman_noise && !s.raman_response);
        assert_eq!(cfg.raman_model().unwrap(), RamanModel::instantaneous());
    }
}
