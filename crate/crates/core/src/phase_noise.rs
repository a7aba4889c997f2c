//! Excess phase noise on top of the simulated Kerr squeezing ellipse.
//!
//! The relative dark-plane variance at measurement angle `θ` is
//!
//! ```text
//! ρ(θ) = ρ_p sin²θ + ρ_s cos²(θ - θ_K) + ρ_a sin²(θ - θ_K)
//! ```
//!
//! where `θ_K`, `ρ_s`, `ρ_a` come from simulation and the phase-noise variance
//! grows linearly with pulse energy, `ρ_p(E) = c_p·E (+ c_0)`. The fit finds the
//! single coefficient `c_p` whose minimizing angles `θ_N(E)` best match measured
//! squeezing angles.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stokes::wrap_axial;

/// Upper bound on `ρ_p(E_max)` explored by the fit.
pub const MAX_PHASE_NOISE: f64 = 1e3;

/// Kerr squeezing parameters at one energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KerrPoint {
    /// Total pulse energy (J).
    pub energy: f64,
    pub theta_k: f64,
    pub rho_s: f64,
    pub rho_a: f64,
}

/// Simulated Kerr curve, interpolated piecewise-linearly in
/// `(θ_K, ln ρ_s, ln ρ_a)` between simulated energies.
#[derive(Clone, Debug, PartialEq)]
pub struct KerrSimData {
    energies: Vec<f64>,
    theta_k: Vec<f64>,
    ln_rho_s: Vec<f64>,
    ln_rho_a: Vec<f64>,
}

impl KerrSimData {
    pub fn new(points: &[KerrPoint]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Fit("no simulated Kerr points".into()));
        }
        let mut energies = Vec::with_capacity(points.len());
        let mut theta_k: Vec<f64> = Vec::with_capacity(points.len());
        let mut ln_rho_s = Vec::with_capacity(points.len());
        let mut ln_rho_a = Vec::with_capacity(points.len());
        for p in points {
            if let Some(&last) = energies.last() {
                if !(p.energy > last) {
                    return Err(Error::Fit("simulated energies must be strictly increasing".into()));
                }
            }
            if !(p.rho_s > 0.0 && p.rho_a >= p.rho_s && p.theta_k.is_finite()) {
                return Err(Error::Fit(format!(
                    "invalid Kerr point at E = {:.4e} J: need 0 < rho_s <= rho_a",
                    p.energy
                )));
            }
            // unwrap so neighbouring angles differ by less than π/2
            let th = match theta_k.last() {
                Some(&prev) => prev + wrap_axial(p.theta_k - prev),
                None => p.theta_k,
            };
            energies.push(p.energy);
            theta_k.push(th);
            ln_rho_s.push(p.rho_s.ln());
            ln_rho_a.push(p.rho_a.ln());
        }
        Ok(Self { energies, theta_k, ln_rho_s, ln_rho_a })
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn range(&self) -> (f64, f64) {
        (self.energies[0], *self.energies.last().unwrap())
    }

    pub fn at(&self, energy: f64) -> Result<KerrPoint> {
        let (lo, hi) = self.range();
        let slack = 1e-9 * hi.abs().max(f64::MIN_POSITIVE);
        if !(energy >= lo - slack && energy <= hi + slack) {
            return Err(Error::Fit(format!(
                "energy {energy:.4e} J outside simulated range [{lo:.4e}, {hi:.4e}] J"
            )));
        }
        let e = energy.clamp(lo, hi);
        let i = match self.energies.iter().position(|&x| x >= e) {
            Some(0) | None => 0,
            Some(i) => i - 1,
        };
        let (th, s, a) = if self.energies.len() == 1 {
            (self.theta_k[0], self.ln_rho_s[0], self.ln_rho_a[0])
        } else {
            let j = (i + 1).min(self.energies.len() - 1);
            let span = self.energies[j] - self.energies[i];
            let t = if span > 0.0 { (e - self.energies[i]) / span } else { 0.0 };
            let lerp = |v: &[f64]| v[i] + t * (v[j] - v[i]);
            (lerp(&self.theta_k), lerp(&self.ln_rho_s), lerp(&self.ln_rho_a))
        };
        Ok(KerrPoint { energy, theta_k: th.rem_euclid(PI), rho_s: s.exp(), rho_a: a.exp() })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseNoiseModel {
    /// Phase-noise coefficient per unit energy (1/J).
    pub c_p: f64,
    /// Energy-independent offset (disabled by default).
    pub c_0: f64,
}

impl PhaseNoiseModel {
    pub fn linear(c_p: f64) -> Self {
        Self { c_p, c_0: 0.0 }
    }

    pub fn rho_p(&self, energy: f64) -> f64 {
        self.c_p * energy + self.c_0
    }
}

/// The three-term variance at angle `theta` for given `ρ_p` and Kerr parameters.
pub fn variance_terms(theta: f64, rho_p: f64, kerr: &KerrPoint) -> f64 {
    let d = theta - kerr.theta_k;
    rho_p * theta.sin().powi(2) + kerr.rho_s * d.cos().powi(2) + kerr.rho_a * d.sin().powi(2)
}

pub fn total_variance(theta: f64, energy: f64, sim: &KerrSimData, model: &PhaseNoiseModel) -> Result<f64> {
    let kerr = sim.at(energy)?;
    Ok(variance_terms(theta, model.rho_p(energy), &kerr))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinimizingAngle {
    /// In `[0, π)`.
    pub theta: f64,
    /// The variance is independent of angle; `theta` is `θ_K`.
    pub degenerate: bool,
}

/// Closed-form minimizer. Writing `ρ(θ) = C + ½[a cos 2θ + b sin 2θ]` with
/// `a = -ρ_p + (ρ_s - ρ_a) cos 2θ_K` and `b = (ρ_s - ρ_a) sin 2θ_K`, the
/// minimum sits at `2θ = atan2(-b, -a)`.
pub fn minimizing_angle_for(rho_p: f64, kerr: &KerrPoint) -> MinimizingAngle {
    let diff = kerr.rho_s - kerr.rho_a;
    let a = -rho_p + diff * (2.0 * kerr.theta_k).cos();
    let b = diff * (2.0 * kerr.theta_k).sin();
    let scale = rho_p.abs() + kerr.rho_s.abs() + kerr.rho_a.abs();
    if a.hypot(b) <= 1e-14 * scale {
        return MinimizingAngle { theta: kerr.theta_k.rem_euclid(PI), degenerate: true };
    }
    MinimizingAngle { theta: (0.5 * (-b).atan2(-a)).rem_euclid(PI), degenerate: false }
}

/// Brute-force minimizer over `n` equally spaced angles in `[0, π)`.
pub fn scan_minimizing_angle(rho_p: f64, kerr: &KerrPoint, n: usize) -> f64 {
    (0..n)
        .map(|i| PI * i as f64 / n as f64)
        .map(|th| (th, variance_terms(th, rho_p, kerr)))
        .fold((0.0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
        .0
}

pub fn minimizing_angle(energy: f64, sim: &KerrSimData, model: &PhaseNoiseModel) -> Result<MinimizingAngle> {
    let kerr = sim.at(energy)?;
    Ok(minimizing_angle_for(model.rho_p(energy), &kerr))
}

/// A measured squeezing angle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasuredAngle {
    /// Total pulse energy (J).
    pub energy: f64,
    /// Angle (rad).
    pub theta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    /// Also fit an energy-independent phase-noise offset `c_0`.
    pub with_offset: bool,
    pub max_iterations: usize,
    /// Relative bracket width at which golden-section search stops.
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { with_offset: false, max_iterations: 300, tolerance: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub model: PhaseNoiseModel,
    /// `θ_N(E) - θ_exp` per measured point (rad), wrapped into `(-π/2, π/2]`.
    pub residuals: Vec<f64>,
    pub rms_residual: f64,
}

/// How angles are minimized inside the objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AngleSolver {
    ClosedForm,
    /// Grid scan with the given number of points.
    Scan(usize),
}

/// Sum of squared angle residuals for a model.
pub fn fit_objective(
    measured: &[MeasuredAngle],
    kerr: &[KerrPoint],
    model: &PhaseNoiseModel,
    solver: AngleSolver,
) -> f64 {
    measured
        .iter()
        .zip(kerr)
        .map(|(m, k)| {
            let rho_p = model.rho_p(m.energy);
            let th = match solver {
                AngleSolver::ClosedForm => minimizing_angle_for(rho_p, k).theta,
                AngleSolver::Scan(n) => scan_minimizing_angle(rho_p, k, n),
            };
            wrap_axial(th - m.theta).powi(2)
        })
        .sum()
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Bounded 1-D minimization: log-spaced scan of `[0, hi]` to bracket the global
/// minimum, then golden-section refinement.
fn minimize_1d<F: Fn(f64) -> f64>(f: F, hi: f64, options: &FitOptions) -> Result<(f64, f64)> {
    const SCAN: usize = 240;
    const DECADES: f64 = 10.0;
    let mut xs = vec![0.0];
    xs.extend((0..=SCAN).map(|i| hi * 10f64.powf(-DECADES + DECADES * i as f64 / SCAN as f64)));
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let best = vals
        .iter()
        .enumerate()
        .fold((0usize, f64::INFINITY), |b, (i, &v)| if v < b.1 { (i, v) } else { b });
    if !best.1.is_finite() {
        return Err(Error::Fit("objective is not finite".into()));
    }
    let (mut a, mut b) = (xs[best.0.saturating_sub(1)], xs[(best.0 + 1).min(xs.len() - 1)]);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut converged = false;
    for _ in 0..options.max_iterations {
        let mid = 0.5 * (a + b);
        if b - a <= options.tolerance * mid.abs().max(1e-3 * hi * 10f64.powf(-DECADES)) {
            converged = true;
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    if !converged {
        return Err(Error::Fit(format!(
            "golden-section search did not converge in {} iterations (bracket [{a:.6e}, {b:.6e}])",
            options.max_iterations
        )));
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    // the scan already evaluated the boundary; keep it if it is at least as good
    if vals[0] <= fx {
        return Ok((0.0, vals[0]));
    }
    Ok((x, fx))
}

/// Fits `c_p` (and optionally `c_0`) to measured squeezing angles.
pub fn fit_phase_coefficient(
    measured: &[MeasuredAngle],
    sim: &KerrSimData,
    options: &FitOptions,
) -> Result<FitResult> {
    if measured.len() < 2 {
        return Err(Error::Fit(format!("need at least two measured angles, got {}", measured.len())));
    }
    if measured.iter().any(|m| !(m.energy.is_finite() && m.theta.is_finite())) {
        return Err(Error::Fit("measured data contains non-finite values".into()));
    }
    let kerr: Vec<KerrPoint> = measured.iter().map(|m| sim.at(m.energy)).collect::<Result<_>>()?;
    let e_max = measured.iter().map(|m| m.energy).fold(0.0, f64::max);
    if !(e_max > 0.0) {
        return Err(Error::Fit("measured energies must be positive".into()));
    }
    let cp_max = MAX_PHASE_NOISE / e_max;

    let fit_cp = |c_0: f64| -> Result<(f64, f64)> {
        minimize_1d(
            |c_p| fit_objective(measured, &kerr, &PhaseNoiseModel { c_p, c_0 }, AngleSolver::ClosedForm),
            cp_max,
            options,
        )
    };
    let model = if options.with_offset {
        // profile out c_p for each trial offset
        let outer = |c_0: f64| fit_cp(c_0).map(|(_, v)| v).unwrap_or(f64::INFINITY);
        let (c_0, _) = minimize_1d(outer, MAX_PHASE_NOISE, options)?;
        let (c_p, _) = fit_cp(c_0)?;
        PhaseNoiseModel { c_p, c_0 }
    } else {
        let (c_p, _) = fit_cp(0.0)?;
        PhaseNoiseModel::linear(c_p)
    };
    let residuals: Vec<f64> = measured
        .iter()
        .zip(&kerr)
        .map(|(m, k)| wrap_axial(minimizing_angle_for(model.rho_p(m.energy), k).theta - m.theta))
        .collect();
    let rms_residual = (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt();
    Ok(FitResult { model, residuals, rms_residual })
}
