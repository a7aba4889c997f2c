//! Run orchestration: trajectory ensembles, energy sweeps, snapshot runs,
//! shot-noise calibration and the phase-noise fit, with their output files.
//!
//! Every trajectory's noise is drawn from its own counter-based stream, and
//! ensemble moments are accumulated in trajectory order after the parallel
//! part, so results do not depend on the worker count.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::grid::SimGrid;
use crate::phase_noise::{
    fit_phase_coefficient, minimizing_angle_for, FitOptions, KerrPoint, KerrSimData, MeasuredAngle,
    PhaseNoiseModel,
};
use crate::propagator::{Propagator, Snapshot, Workspace};
use crate::pulse::{add_vacuum_noise, coherent_sech, FieldState};
use crate::raman::{build_response, raman_gain, Response, ThermalSpectrum};
use crate::rng::trajectory_rng;
use crate::stokes::{
    find_extremal_angles, ordering_correction_ratio, stokes_from_fields, to_db, EnsembleStats, Estimate,
    SqueezingCurvePoint, StokesSample, ORDERING_CORRECTION_LIMIT,
};
use crate::units::{soliton_amplitude, PhysicalParams, PICOJOULE};

pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_DETECTED_CSV: &str = "sweep_detected.csv";
pub const SWEEP_METADATA: &str = "sweep_metadata.json";
pub const SNAPSHOT_METADATA: &str = "snapshots_metadata.json";
pub const CALIBRATION_CSV: &str = "calibration.csv";
pub const CALIBRATION_METADATA: &str = "calibration_metadata.json";

/// Number of dark-plane angles checked by the shot-noise calibration.
pub const CALIBRATION_ANGLES: usize = 8;

/// A validated config with everything that does not depend on the pulse
/// energy precomputed.
#[derive(Clone, Debug)]
pub struct Simulation {
    config: ExperimentConfig,
    params: PhysicalParams,
    grid: SimGrid,
    response: Response,
    noise_density: Vec<f64>,
}

impl Simulation {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let params = config.physical_params()?;
        let grid = config.grid()?;
        let response = build_response(&config.raman_model()?, &grid)?;
        let thermal = ThermalSpectrum::new(&grid, &params);
        let noise_density = raman_gain(&response, &thermal, params.nbar);
        Ok(Self { config, params, grid, response, noise_density })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn grid(&self) -> &SimGrid {
        &self.grid
    }

    pub fn response(&self) -> &Response {
        &self.response
    }

    /// Raman noise spectral density `S(ω_k)`.
    pub fn noise_density(&self) -> &[f64] {
        &self.noise_density
    }

    /// Per-polarization soliton-normalized amplitude for a total energy (J).
    pub fn amplitude(&self, energy: f64) -> Result<f64> {
        soliton_amplitude(energy, &self.params)
    }

    pub fn propagator(&self, amplitude: f64) -> Result<Propagator> {
        let cfg = self.config.stepper_config(amplitude);
        let density = cfg.raman_noise.then_some(self.noise_density.as_slice());
        Ok(Propagator::new(&self.grid, &self.response, density, cfg)?.with_vacuum_floor(self.params.nbar))
    }
}

/// Moments of one energy point, in trajectory order.
#[derive(Clone, Debug)]
pub struct EnsembleResult {
    pub stats: EnsembleStats,
    pub d_zeta: f64,
    pub steps: usize,
    /// Trajectories whose exit field tripped the aliasing guard.
    pub aliased_trajectories: usize,
    /// First aliasing warning seen, if any.
    pub first_warning: Option<String>,
}

impl EnsembleResult {
    pub fn mean(&self) -> StokesSample {
        self.stats.total().mean()
    }

    /// `⟨S3⟩/⟨S0⟩`, close to one for a bright circular input.
    pub fn s3_over_s0(&self) -> f64 {
        let m = self.mean();
        m.s3 / m.s0
    }
}

/// A rayon pool with `threads` workers (0 picks the rayon default).
pub fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Runs `trajectories` stochastic trajectories of a pulse with total energy
/// `energy` (J) over `zeta_max`. `point` selects the random streams.
pub fn run_ensemble(
    sim: &Simulation,
    energy: f64,
    point: u64,
    zeta_max: f64,
    trajectories: usize,
    pool: &rayon::ThreadPool,
) -> Result<EnsembleResult> {
    if trajectories < 2 {
        return Err(Error::Config(format!("trajectories must be >= 2, got {trajectories}")));
    }
    let amplitude = sim.amplitude(energy)?;
    let prop = sim.propagator(amplitude)?;
    let mean = coherent_sech(amplitude, &sim.grid)?;
    let seed = sim.config.seed;
    let nbar = sim.params.nbar;
    let phase = sim.config.relative_phase();
    let vacuum = prop.config().vacuum_noise;
    let grid = &sim.grid;

    type Outcome = Result<(StokesSample, usize, usize, f64, Option<String>)>;
    let outcomes: Vec<Outcome> = pool.install(|| {
        (0..trajectories)
            .into_par_iter()
            .map_init(
                || Workspace::new(grid),
                |ws, i| {
                    let mut rng = trajectory_rng(seed, point, i as u64);
                    let mut state = if vacuum {
                        add_vacuum_noise(&mean, &mut rng, grid, nbar)?
                    } else {
                        FieldState::from_mean(&mean)
                    };
                    let report = prop.propagate(&mut state, zeta_max, &mut rng, ws)?;
                    let warn = report.warnings.into_iter().next();
                    Ok((stokes_from_fields(&state, grid, nbar, phase), i, report.steps, report.d_zeta, warn))
                },
            )
            .collect()
    });

    let mut stats = EnsembleStats::default();
    let (mut steps, mut d_zeta) = (0, 0.0);
    let mut aliased = 0;
    let mut first_warning = None;
    for outcome in outcomes {
        let (sample, i, n, dz, warn) = outcome?;
        stats.push(i, &sample);
        steps = n;
        d_zeta = dz;
        if let Some(w) = warn {
            aliased += 1;
            first_warning.get_or_insert(w);
        }
    }
    Ok(EnsembleResult { stats, d_zeta, steps, aliased_trajectories: aliased, first_warning })
}

/// One row of a sweep CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub energy_pj: f64,
    #[serde(rename = "theta_K_rad")]
    pub theta_k_rad: f64,
    pub phi_waveplate_deg: f64,
    pub rho_s: f64,
    pub rho_a: f64,
    pub rho_s_db: f64,
    pub rho_a_db: f64,
    pub se_s: f64,
    pub se_a: f64,
    pub n_traj: u64,
}

impl SweepRow {
    pub fn from_point(p: &SqueezingCurvePoint) -> Self {
        Self {
            energy_pj: p.energy / PICOJOULE,
            theta_k_rad: p.theta_k,
            phi_waveplate_deg: p.waveplate_angle().to_degrees(),
            rho_s: p.rho_s,
            rho_a: p.rho_a,
            rho_s_db: to_db(p.rho_s),
            rho_a_db: to_db(p.rho_a),
            se_s: p.se_s,
            se_a: p.se_a,
            n_traj: p.n_trajectories,
        }
    }

    pub fn kerr_point(&self) -> KerrPoint {
        KerrPoint { energy: self.energy_pj * PICOJOULE, theta_k: self.theta_k_rad, rho_s: self.rho_s, rho_a: self.rho_a }
    }
}

pub fn write_sweep_csv(path: &Path, points: &[SqueezingCurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in points {
        w.serialize(SweepRow::from_point(p))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<SweepRow>, _>>()?;
    Ok(rows)
}

/// Diagnostics recorded for every sweep energy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub energy_pj: f64,
    pub amplitude: f64,
    pub status: String,
    pub error: Option<String>,
    pub d_zeta: Option<f64>,
    pub steps: Option<usize>,
    pub seconds: f64,
    pub s3_over_s0: Option<f64>,
    pub ordering_correction: Option<f64>,
    pub degenerate: Option<bool>,
    pub aliased_trajectories: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub program: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub trajectories: usize,
    pub threads: usize,
    pub fibre_label: String,
    pub zeta_max: f64,
    pub total_seconds: f64,
    pub warnings: Vec<String>,
    pub outputs: Vec<String>,
    pub points: Vec<PointRecord>,
    pub config: ExperimentConfig,
}

impl RunMetadata {
    fn new(command: &str, config: &ExperimentConfig, threads: usize, zeta_max: f64) -> Result<Self> {
        Ok(Self {
            program: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256: config_hash(config)?,
            seed: config.seed,
            trajectories: config.trajectories,
            threads,
            fibre_label: config.fibre_label.clone(),
            zeta_max,
            total_seconds: 0.0,
            warnings: Vec::new(),
            outputs: Vec::new(),
            points: Vec::new(),
            config: config.clone(),
        })
    }

    fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// SHA-256 of the canonical JSON form of the effective config.
pub fn config_hash(config: &ExperimentConfig) -> Result<String> {
    let digest = Sha256::digest(serde_json::to_vec(config)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    /// Points that completed, in sweep order, before detection loss.
    pub points: Vec<SqueezingCurvePoint>,
    pub detected: Vec<SqueezingCurvePoint>,
    pub metadata: RunMetadata,
    pub output_dir: PathBuf,
}

impl SweepOutcome {
    pub fn failed_points(&self) -> usize {
        self.metadata.points.iter().filter(|p| p.error.is_some()).count()
    }
}

/// Squeezing versus energy. Writes the raw and detection-loss CSVs and the
/// run metadata to the config's output directory. An energy whose ensemble
/// fails is recorded in the metadata and skipped.
pub fn run_sweep(config: &ExperimentConfig, threads: usize) -> Result<SweepOutcome> {
    let started = Instant::now();
    let sim = Simulation::new(config.clone())?;
    let pool = thread_pool(threads)?;
    let zeta_max = config.zeta_max()?;
    let out = config.output_dir.clone();
    ensure_dir(&out)?;
    let mut meta = RunMetadata::new("sweep", config, pool.current_num_threads(), zeta_max)?;
    let mut points = Vec::new();
    let mut detected = Vec::new();

    for (k, &energy) in config.energies().iter().enumerate() {
        let t = Instant::now();
        let amplitude = sim.amplitude(energy).unwrap_or(f64::NAN);
        let mut rec = PointRecord {
            energy_pj: energy / PICOJOULE,
            amplitude,
            status: "ok".into(),
            error: None,
            d_zeta: None,
            steps: None,
            seconds: 0.0,
            s3_over_s0: None,
            ordering_correction: None,
            degenerate: None,
            aliased_trajectories: None,
        };
        let result = if energy > 0.0 {
            run_ensemble(&sim, energy, k as u64, zeta_max, config.trajectories, &pool)
        } else {
            Err(Error::Domain("a dark pulse has no mean S3 to normalize the variances by".into()))
        };
        let result = result.and_then(|ens| {
            rec.d_zeta = Some(ens.d_zeta);
            rec.steps = Some(ens.steps);
            rec.s3_over_s0 = Some(ens.s3_over_s0());
            rec.aliased_trajectories = Some(ens.aliased_trajectories);
            let ordering = ordering_correction_ratio(sim.grid.n_points(), ens.mean().s0);
            rec.ordering_correction = Some(ordering);
            if ordering > ORDERING_CORRECTION_LIMIT {
                meta.warnings.push(format!(
                    "{:.3} pJ: ordering correction ratio {ordering:.3e} exceeds {ORDERING_CORRECTION_LIMIT:e}",
                    rec.energy_pj
                ));
            }
            if let Some(w) = &ens.first_warning {
                meta.warnings.push(format!(
                    "{:.3} pJ: {} of {} trajectories: {w}",
                    rec.energy_pj, ens.aliased_trajectories, config.trajectories
                ));
            }
            let ext = find_extremal_angles(&ens.stats)?;
            rec.degenerate = Some(ext.degenerate);
            if ext.degenerate {
                meta.warnings.push(format!("{:.3} pJ: squeezing ellipse is degenerate", rec.energy_pj));
            }
            let point = SqueezingCurvePoint::from_extremal(energy, &ext);
            let seen = point.with_loss(sim.params.loss_fraction)?;
            Ok((point, seen))
        });
        match result {
            Ok((p, d)) => {
                points.push(p);
                detected.push(d);
            }
            Err(e) => {
                rec.status = "error".into();
                rec.error = Some(e.to_string());
            }
        }
        rec.seconds = t.elapsed().as_secs_f64();
        meta.points.push(rec);
    }

    write_sweep_csv(&out.join(SWEEP_CSV), &points)?;
    write_sweep_csv(&out.join(SWEEP_DETECTED_CSV), &detected)?;
    meta.outputs = vec![SWEEP_CSV.into(), SWEEP_DETECTED_CSV.into()];
    meta.total_seconds = started.elapsed().as_secs_f64();
    meta.write(&out.join(SWEEP_METADATA))?;
    Ok(SweepOutcome { points, detected, metadata: meta, output_dir: out })
}

/// One row of a snapshot CSV. Row `j` pairs time sample `τ_j` with the
/// `j`-th frequency in ascending order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub tau: f64,
    pub intensity_x: f64,
    pub intensity_y: f64,
    pub omega: f64,
    pub spectral_power_x: f64,
    pub spectral_power_y: f64,
}

#[derive(Clone, Debug)]
pub struct SnapshotOutcome {
    pub energy: f64,
    pub snapshots: Vec<Snapshot>,
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Default observation positions: five evenly spaced points including both ends.
pub fn default_snapshot_positions(zeta_max: f64) -> Vec<f64> {
    (0..5).map(|i| zeta_max * i as f64 / 4.0).collect()
}

/// Noise-free propagation of a single pulse with `|φ(τ)|²` and `|φ̃(ω)|²`
/// written at each observation position.
pub fn run_snapshots(config: &ExperimentConfig, energy_pj: f64) -> Result<SnapshotOutcome> {
    let started = Instant::now();
    let mut cfg = config.clone();
    cfg.stepper.vacuum_noise = false;
    cfg.stepper.raman_noise = false;
    let sim = Simulation::new(cfg)?;
    let zeta_max = sim.config.zeta_max()?;
    let positions = if sim.config.stepper.snapshots.is_empty() {
        default_snapshot_positions(zeta_max)
    } else {
        sim.config.stepper.snapshots.iter().copied().filter(|&z| z <= zeta_max).collect()
    };
    let energy = energy_pj * PICOJOULE;
    let amplitude = sim.amplitude(energy)?;
    let prop = sim.propagator(amplitude)?;
    let mut state = FieldState::from_mean(&coherent_sech(amplitude, &sim.grid)?);
    let mut snapshots = Vec::new();
    let mut rng = trajectory_rng(sim.config.seed, 0, 0);
    let mut ws = Workspace::new(&sim.grid);
    let report = prop.propagate_observed(&mut state, zeta_max, &positions, &mut rng, &mut ws, |s| {
        snapshots.push(Snapshot::capture(s, &sim.grid)?);
        Ok(())
    })?;

    let out = &config.output_dir;
    ensure_dir(out)?;
    let order = sim.grid.ascending_order();
    let mut files = Vec::new();
    for (i, snap) in snapshots.iter().enumerate() {
        let name = format!("snapshot_{energy_pj}pJ_{i:03}.csv");
        let mut w = csv::Writer::from_path(out.join(&name))?;
        for (j, &k) in order.iter().enumerate() {
            w.serialize(SnapshotRow {
                tau: sim.grid.tau()[j],
                intensity_x: snap.intensity[0][j],
                intensity_y: snap.intensity[1][j],
                omega: sim.grid.omega()[k],
                spectral_power_x: snap.spectral_power[0][k],
                spectral_power_y: snap.spectral_power[1][k],
            })?;
        }
        w.flush()?;
        files.push(out.join(name));
    }

    let mut meta = RunMetadata::new("snapshots", config, 1, zeta_max)?;
    meta.outputs = files.iter().filter_map(|f| f.file_name()).map(|f| f.to_string_lossy().into_owned()).collect();
    meta.warnings = report.warnings.clone();
    meta.total_seconds = started.elapsed().as_secs_f64();
    meta.points.push(PointRecord {
        energy_pj,
        amplitude,
        status: "ok".into(),
        error: None,
        d_zeta: Some(report.d_zeta),
        steps: Some(report.steps),
        seconds: meta.total_seconds,
        s3_over_s0: None,
        ordering_correction: None,
        degenerate: None,
        aliased_trajectories: None,
    });
    meta.write(&out.join(SNAPSHOT_METADATA))?;
    Ok(SnapshotOutcome { energy, snapshots, files, warnings: report.warnings })
}

/// Relative variance at one dark-plane angle from a calibration run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub theta_rad: f64,
    pub rho: f64,
    pub se: f64,
    /// `(ρ - 1)/SE`.
    pub z_score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub energy_pj: f64,
    pub trajectories: u64,
    pub rows: Vec<CalibrationRow>,
    /// `⟨S3⟩/⟨S0⟩`.
    pub s3_over_s0: f64,
    /// `⟨S0 - S3⟩` minus its vacuum (symmetric-ordering) contribution `n_points`,
    /// with its standard error.
    pub s0_minus_s3: f64,
    pub s0_minus_s3_se: f64,
    pub passed: bool,
}

/// Shot-noise check: the first configured energy is propagated with the
/// nonlinearity and Raman terms off, so every dark-plane variance must equal
/// the coherent-state level `ρ = 1`.
pub fn run_calibration(config: &ExperimentConfig, threads: usize) -> Result<CalibrationReport> {
    let started = Instant::now();
    let mut cfg = config.clone();
    cfg.stepper.nonlinearity = false;
    cfg.stepper.vacuum_noise = true;
    cfg.raman.enabled = false;
    let zeta_max = cfg.zeta_max()?;
    // the remaining evolution is linear and exact for any step
    if cfg.stepper.d_zeta.is_none() {
        cfg.stepper.d_zeta = Some(zeta_max.max(1e-3));
    }
    let sim = Simulation::new(cfg)?;
    let pool = thread_pool(threads)?;
    let energy = sim.config.energies()[0];
    let ens = run_ensemble(&sim, energy, 0, zeta_max, sim.config.trajectories, &pool)?;

    let mut rows = Vec::with_capacity(CALIBRATION_ANGLES);
    for i in 0..CALIBRATION_ANGLES {
        let theta = std::f64::consts::PI * i as f64 / CALIBRATION_ANGLES as f64;
        let (rho, se) = ens.stats.jackknife(|m| m.relative_variance(theta))?;
        rows.push(CalibrationRow { theta_rad: theta, rho, se, z_score: (rho - 1.0) / se });
    }
    let vacuum = sim.grid.n_points() as f64;
    let (diff, diff_se) = ens.stats.jackknife(|m| {
        let mean = m.mean();
        Ok(mean.s0 - mean.s3 - vacuum)
    })?;
    let passed = rows.iter().all(|r| r.z_score.abs() <= 3.0) && diff.abs() <= 3.0 * diff_se;
    let report = CalibrationReport {
        energy_pj: energy / PICOJOULE,
        trajectories: ens.stats.count(),
        rows,
        s3_over_s0: ens.s3_over_s0(),
        s0_minus_s3: diff,
        s0_minus_s3_se: diff_se,
        passed,
    };

    let out = &config.output_dir;
    ensure_dir(out)?;
    let mut w = csv::Writer::from_path(out.join(CALIBRATION_CSV))?;
    for r in &report.rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut meta = RunMetadata::new("calibrate", config, pool.current_num_threads(), zeta_max)?;
    meta.outputs = vec![CALIBRATION_CSV.into()];
    meta.total_seconds = started.elapsed().as_secs_f64();
    if !passed {
        meta.warnings.push("dark-plane variance deviates from shot noise by more than 3 SE".into());
    }
    let doc = serde_json::json!({ "metadata": meta, "report": report });
    fs::write(out.join(CALIBRATION_METADATA), serde_json::to_string_pretty(&doc)?)?;
    Ok(report)
}

/// One measured squeezing angle as read from `energy_pj,theta_deg` CSV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasuredRow {
    pub energy_pj: f64,
    pub theta_deg: f64,
}

impl MeasuredRow {
    pub fn to_angle(self) -> MeasuredAngle {
        MeasuredAngle { energy: self.energy_pj * PICOJOULE, theta: self.theta_deg.to_radians() }
    }
}

pub fn read_measured_csv(path: &Path) -> Result<Vec<MeasuredAngle>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<MeasuredRow>, _>>()?;
    Ok(rows.into_iter().map(MeasuredRow::to_angle).collect())
}

/// Sweep CSV and measured angles for one fibre.
#[derive(Clone, Debug, PartialEq)]
pub struct FitDataset {
    pub label: String,
    pub sweep_csv: PathBuf,
    pub measured_csv: PathBuf,
}

/// Fit summary in the external report format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub label: String,
    /// Phase-noise coefficient (1/J).
    pub c_p: f64,
    pub c_0: f64,
    pub rms_residual_deg: f64,
    pub per_point_residuals: Vec<PointResidual>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointResidual {
    pub energy_pj: f64,
    pub theta_exp_deg: f64,
    pub theta_n_deg: f64,
    pub residual_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub fits: Vec<FitReport>,
    /// Labels in increasing order of `c_p`.
    pub ordering_by_c_p: Vec<String>,
}

/// Row of the fitted-curve CSV, evaluated at every simulated energy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitCurveRow {
    pub energy_pj: f64,
    #[serde(rename = "theta_K_rad")]
    pub theta_k_rad: f64,
    #[serde(rename = "theta_N_rad")]
    pub theta_n_rad: f64,
    pub rho_p: f64,
}

fn fit_one(data: &FitDataset, options: &FitOptions, out: &Path) -> Result<FitReport> {
    let ctx = |e: Error| Error::Fit(format!("{}: {e}", data.label));
    let rows = read_sweep_csv(&data.sweep_csv)?;
    let kerr: Vec<KerrPoint> = rows.iter().map(SweepRow::kerr_point).collect();
    let sim = KerrSimData::new(&kerr).map_err(ctx)?;
    let measured = read_measured_csv(&data.measured_csv)?;
    let (lo, hi) = sim.range();
    if let Some(m) = measured.iter().find(|m| m.energy < lo * (1.0 - 1e-9) || m.energy > hi * (1.0 + 1e-9)) {
        return Err(Error::Fit(format!(
            "{}: measured energy {:.4} pJ outside simulated range [{:.4}, {:.4}] pJ",
            data.label,
            m.energy / PICOJOULE,
            lo / PICOJOULE,
            hi / PICOJOULE
        )));
    }
    let fit = fit_phase_coefficient(&measured, &sim, options).map_err(ctx)?;
    let model: PhaseNoiseModel = fit.model;

    let per_point_residuals = measured
        .iter()
        .zip(&fit.residuals)
        .map(|(m, r)| PointResidual {
            energy_pj: m.energy / PICOJOULE,
            theta_exp_deg: m.theta.to_degrees(),
            theta_n_deg: (m.theta + r).to_degrees(),
            residual_deg: r.to_degrees(),
        })
        .collect();
    let report = FitReport {
        label: data.label.clone(),
        c_p: model.c_p,
        c_0: model.c_0,
        rms_residual_deg: fit.rms_residual.to_degrees(),
        per_point_residuals,
    };

    let mut w = csv::Writer::from_path(out.join(format!("fit_curve_{}.csv", data.label)))?;
    for k in &kerr {
        let rho_p = model.rho_p(k.energy);
        w.serialize(FitCurveRow {
            energy_pj: k.energy / PICOJOULE,
            theta_k_rad: k.theta_k,
            theta_n_rad: minimizing_angle_for(rho_p, k).theta,
            rho_p,
        })?;
    }
    w.flush()?;
    fs::write(out.join(format!("fit_{}.json", data.label)), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

/// Fits the phase-noise coefficient for each dataset. Writes
/// `fit_<label>.json` and `fit_curve_<label>.csv` per dataset and, for more
/// than one dataset, `fit_summary.json` with the coefficient ordering.
pub fn run_fit(datasets: &[FitDataset], options: &FitOptions, out: &Path) -> Result<FitSummary> {
    if datasets.is_empty() {
        return Err(Error::Config("no fit datasets given".into()));
    }
    ensure_dir(out)?;
    let fits = datasets.iter().map(|d| fit_one(d, options, out)).collect::<Result<Vec<_>>>()?;
    let mut order: Vec<&FitReport> = fits.iter().collect();
    order.sort_by(|a, b| a.c_p.total_cmp(&b.c_p));
    let summary = FitSummary { ordering_by_c_p: order.iter().map(|f| f.label.clone()).collect(), fits };
    if datasets.len() > 1 {
        fs::write(out.join("fit_summary.json"), serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(summary)
}

/// Relative dark-plane variance with its jackknife error at angle `theta`.
pub fn ensemble_variance(stats: &EnsembleStats, theta: f64) -> Result<Estimate> {
    let (value, std_error) = stats.jackknife(|m| m.relative_variance(theta))?;
    Ok(Estimate { value, std_error })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config(dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::with_energies(vec![10.0, 40.0]);
        cfg.grid.n_points = 256;
        cfg.grid.tau_window = 30.0;
        cfg.stepper.zeta_max = Some(0.3);
        cfg.stepper.d_zeta = Some(0.01);
        cfg.trajectories = 64;
        cfg.seed = 3;
        cfg.output_dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn sweep_writes_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_sweep(&quick_config(dir.path()), 1).unwrap();
        assert_eq!(out.points.len(), 2);
        assert_eq!(out.failed_points(), 0);
        let header = fs::read_to_string(dir.path().join(SWEEP_CSV)).unwrap();
        assert_eq!(
            header.lines().next().unwrap(),
            "energy_pj,theta_K_rad,phi_waveplate_deg,rho_s,rho_a,rho_s_db,rho_a_db,se_s,se_a,n_traj"
        );
        let raw = read_sweep_csv(&dir.path().join(SWEEP_CSV)).unwrap();
        let seen = read_sweep_csv(&dir.path().join(SWEEP_DETECTED_CSV)).unwrap();
        for (r, s) in raw.iter().zip(&seen) {
            assert_eq!(r.n_traj, 64);
            assert!((s.rho_s - (0.76 * r.rho_s + 0.24)).abs() < 1e-12);
        }
        let meta: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(SWEEP_METADATA)).unwrap()).unwrap();
        assert_eq!(meta["config_sha256"].as_str().unwrap().len(), 64);
        assert_eq!(meta["points"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn failing_energy_is_recorded_and_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quick_config(dir.path());
        cfg.pulse.energy_pj = crate::config::EnergyList::Many(vec![0.0, 10.0]);
        let out = run_sweep(&cfg, 1).unwrap();
        assert_eq!(out.points.len(), 1);
        assert_eq!(out.failed_points(), 1);
        assert_eq!(out.metadata.points[0].status, "error");
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_sweep(&quick_config(a.path()), 1).unwrap();
        run_sweep(&quick_config(b.path()), 3).unwrap();
        for f in [SWEEP_CSV, SWEEP_DETECTED_CSV] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        }
    }

    #[test]
    fn zero_energy_snapshots_stay_dark() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_snapshots(&quick_config(dir.path()), 0.0).unwrap();
        assert_eq!(out.snapshots.len(), 5);
        assert_eq!(out.files.len(), 5);
        for s in &out.snapshots {
            assert!(s.intensity.iter().flatten().all(|&v| v == 0.0));
        }
        assert!(dir.path().join(SNAPSHOT_METADATA).is_file());
    }

    #[test]
    fn fit_of_simulated_angles_is_zero() {
        let dir = tempfile::tempdir().unwrap();
        let points: Vec<SqueezingCurvePoint> = (0..5)
            .map(|i| SqueezingCurvePoint {
                energy: (5.0 + 10.0 * i as f64) * PICOJOULE,
                theta_k: 3.0 - 0.05 * i as f64,
                rho_s: 0.5,
                rho_a: 3.0 + i as f64,
                se_theta: 0.0,
                se_s: 0.0,
                se_a: 0.0,
                n_trajectories: 100,
                degenerate: false,
            })
            .collect();
        let sweep = dir.path().join("sweep.csv");
        write_sweep_csv(&sweep, &points).unwrap();
        let measured = dir.path().join("measured.csv");
        let mut w = csv::Writer::from_path(&measured).unwrap();
        for p in &points {
            w.serialize(MeasuredRow { energy_pj: p.energy / PICOJOULE, theta_deg: p.theta_k.to_degrees() }).unwrap();
        }
        w.flush().unwrap();
        let data = FitDataset { label: "a".into(), sweep_csv: sweep, measured_csv: measured };
        let summary = run_fit(&[data], &FitOptions::default(), dir.path()).unwrap();
        assert_eq!(summary.fits[0].c_p, 0.0);
        assert!(summary.fits[0].rms_residual_deg < 1e-9);
        assert!(dir.path().join("fit_a.json").is_file());
        assert!(dir.path().join("fit_curve_a.csv").is_file());
    }
}
