use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use polsqueeze::config::ExperimentConfig;
use polsqueeze::experiment::{run_calibration, run_fit, run_snapshots, run_sweep, FitDataset};
use polsqueeze::phase_noise::FitOptions;
use polsqueeze::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "polsqueeze", version, about = "Polarization squeezing of ultrashort pulses in birefringent fibre")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Trajectories per energy (overrides the config).
    #[arg(long, global = true)]
    trajectories: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Squeezing angle and variances versus pulse energy.
    Sweep,
    /// Noise-free propagation with intensity and spectrum snapshots.
    Snapshots {
        /// Pulse energy in pJ; defaults to the first configured energy.
        #[arg(long)]
        energy_pj: Option<f64>,
    },
    /// Fit the phase-noise coefficient to measured squeezing angles.
    Fit {
        /// Sweep CSV, one per dataset.
        #[arg(long, required = true)]
        sweep: Vec<PathBuf>,
        /// Measured `energy_pj,theta_deg` CSV, one per dataset.
        #[arg(long, required = true)]
        measured: Vec<PathBuf>,
        /// Dataset label, one per dataset.
        #[arg(long)]
        label: Vec<String>,
        /// Also fit an energy-independent phase-noise term.
        #[arg(long)]
        with_offset: bool,
    },
    /// Shot-noise check with the nonlinearity switched off.
    Calibrate,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli.config.as_deref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.trajectories {
        cfg.trajectories = n;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Sweep => {
            let cfg = load_config(cli)?;
            let out = run_sweep(&cfg, cli.threads)?;
            for p in &out.detected {
                println!(
                    "{:9.3} pJ  theta_K {:8.5} rad  rho_s {:8.3} dB  rho_a {:8.3} dB",
                    p.energy * 1e12,
                    p.theta_k,
                    polsqueeze::stokes::to_db(p.rho_s),
                    polsqueeze::stokes::to_db(p.rho_a)
                );
            }
            for w in &out.metadata.warnings {
                eprintln!("warning: {w}");
            }
            for p in out.metadata.points.iter().filter(|p| p.error.is_some()) {
                eprintln!("error at {} pJ: {}", p.energy_pj, p.error.as_deref().unwrap_or(""));
            }
            println!("wrote {}", out.output_dir.display());
            if out.points.is_empty() {
                return Err(Error::Analysis("every sweep energy failed".into()));
            }
        }
        Command::Snapshots { energy_pj } => {
            let cfg = load_config(cli)?;
            let energy = energy_pj.unwrap_or(cfg.energies_pj()[0]);
            let out = run_snapshots(&cfg, energy)?;
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Fit { sweep, measured, label, with_offset } => {
            if sweep.len() != measured.len() {
                return Err(Error::Config("give one --measured file per --sweep file".into()));
            }
            if !label.is_empty() && label.len() != sweep.len() {
                return Err(Error::Config("give one --label per dataset".into()));
            }
            let datasets: Vec<FitDataset> = sweep
                .iter()
                .zip(measured)
                .enumerate()
                .map(|(i, (s, m))| FitDataset {
                    label: label.get(i).cloned().unwrap_or_else(|| format!("dataset{}", i + 1)),
                    sweep_csv: s.clone(),
                    measured_csv: m.clone(),
                })
                .collect();
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let options = FitOptions { with_offset: *with_offset, ..FitOptions::default() };
            let summary = run_fit(&datasets, &options, &out)?;
            for f in &summary.fits {
                println!(
                    "{}: c_p = {:.6e} 1/J  c_0 = {:.6e}  rms residual = {:.4} deg",
                    f.label, f.c_p, f.c_0, f.rms_residual_deg
                );
            }
            if summary.fits.len() > 1 {
                println!("increasing c_p: {}", summary.ordering_by_c_p.join(" < "));
            }
        }
        Command::Calibrate => {
            let cfg = load_config(cli)?;
            let report = run_calibration(&cfg, cli.threads)?;
            for r in &report.rows {
                println!("theta {:6.4} rad  rho {:.5} +- {:.5}  z {:+.2}", r.theta_rad, r.rho, r.se, r.z_score);
            }
            println!(
                "<S3>/<S0> = {:.8}  <S0-S3> - n_points = {:.3} +- {:.3}",
                report.s3_over_s0, report.s0_minus_s3, report.s0_minus_s3_se
            );
            println!("{}", if report.passed { "shot-noise check passed" } else { "shot-noise check FAILED" });
            println!("wrote {}", Path::new(&cfg.output_dir).display());
            if !report.passed {
                return Err(Error::Analysis("shot-noise calibration outside 3 standard errors".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
