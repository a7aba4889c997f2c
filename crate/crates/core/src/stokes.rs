//! Stokes parameters, dark-plane noise statistics and detection loss.
//!
//! With `N_σσ' = n̄·Σ φ_σ* φ_σ' dτ`:
//! `S0 = N_xx + N_yy`, `S1 = N_xx - N_yy`, `S2 = N_xy + N_yx`, `S3 = i N_yx - i N_xy`.
//! For light polarized along `S3` the dark plane is spanned by `S1` and `S2`,
//! and `S_θ = cos θ·S1 + sin θ·S2` is squeezed when `Var(S_θ) < |⟨S3⟩|`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SimGrid;
use crate::pulse::FieldState;

/// Number of jackknife blocks used for standard errors.
pub const DEFAULT_JACKKNIFE_GROUPS: usize = 32;

/// Largest tolerated ratio of the neglected symmetric-ordering correction to the signal.
pub const ORDERING_CORRECTION_LIMIT: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StokesSample {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl StokesSample {
    fn as_array(&self) -> [f64; 4] {
        [self.s0, self.s1, self.s2, self.s3]
    }

    pub fn s_theta(&self, theta: f64) -> f64 {
        theta.cos() * self.s1 + theta.sin() * self.s2
    }
}

/// Stokes parameters of one trajectory after applying `e^{i·relative_phase}` to `φ_y`.
pub fn stokes_from_fields(state: &FieldState, grid: &SimGrid, nbar: f64, relative_phase: f64) -> StokesSample {
    let rot = Complex64::cis(relative_phase);
    let (mut nxx, mut nyy) = (0.0, 0.0);
    let mut nxy = Complex64::new(0.0, 0.0);
    for (x, y) in state.phi_x.iter().zip(&state.phi_y) {
        let y = y * rot;
        nxx += x.norm_sqr();
        nyy += y.norm_sqr();
        nxy += x.conj() * y;
    }
    let scale = nbar * grid.d_tau();
    let (nxx, nyy, nxy) = (nxx * scale, nyy * scale, nxy * scale);
    StokesSample { s0: nxx + nyy, s1: nxx - nyy, s2: 2.0 * nxy.re, s3: 2.0 * nxy.im }
}

/// Streaming mean and co-moment matrix of `(S0, S1, S2, S3)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    n: u64,
    mean: [f64; 4],
    m2: [[f64; 4]; 4],
}

impl Moments {
    pub fn push(&mut self, sample: &StokesSample) {
        let x = sample.as_array();
        self.n += 1;
        let n = self.n as f64;
        let mut delta = [0.0; 4];
        for i in 0..4 {
            delta[i] = x[i] - self.mean[i];
            self.mean[i] += delta[i] / n;
        }
        for i in 0..4 {
            for j in 0..4 {
                self.m2[i][j] += delta[i] * (x[j] - self.mean[j]);
            }
        }
    }

    /// Pairwise combination of two disjoint sets of samples.
    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let mut delta = [0.0; 4];
        for i in 0..4 {
            delta[i] = other.mean[i] - self.mean[i];
        }
        for i in 0..4 {
            for j in 0..4 {
                self.m2[i][j] += other.m2[i][j] + delta[i] * delta[j] * na * nb / n;
            }
        }
        for i in 0..4 {
            self.mean[i] += delta[i] * nb / n;
        }
        self.n += other.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> StokesSample {
        let m = self.mean;
        StokesSample { s0: m[0], s1: m[1], s2: m[2], s3: m[3] }
    }

    /// Sample covariance (n − 1 denominator); index 0..4 = S0..S3.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        self.m2[i][j] / (self.n - 1) as f64
    }

    fn normalization(&self) -> Result<f64> {
        let s3 = self.mean[3].abs();
        // a bright S3 excitation must dominate the dark-plane means
        if self.n < 2 || !(s3 > 0.0) || s3 < 1e-9 * self.mean[0].abs() {
            return Err(Error::Analysis(format!(
                "degenerate ensemble: n = {}, <S3> = {:.3e}, <S0> = {:.3e}",
                self.n, self.mean[3], self.mean[0]
            )));
        }
        Ok(s3)
    }

    /// `cov(S1,S2)/|⟨S3⟩|` as `[[v11, c12], [c12, v22]]`.
    pub fn relative_dark_covariance(&self) -> Result<[[f64; 2]; 2]> {
        let norm = self.normalization()?;
        let v11 = self.covariance(1, 1) / norm;
        let v22 = self.covariance(2, 2) / norm;
        let c12 = self.covariance(1, 2) / norm;
        Ok([[v11, c12], [c12, v22]])
    }

    /// `ρ(θ)` as the quadratic form `(cos θ, sin θ)·Cov·(cos θ, sin θ)ᵀ/|⟨S3⟩|`.
    pub fn relative_variance(&self, theta: f64) -> Result<f64> {
        let c = self.relative_dark_covariance()?;
        let (co, si) = (theta.cos(), theta.sin());
        Ok(co * co * c[0][0] + 2.0 * co * si * c[0][1] + si * si * c[1][1])
    }
}

/// Jackknife-ready ensemble accumulator: trajectory `i` feeds block `i mod G`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleStats {
    groups: Vec<Moments>,
}

impl Default for EnsembleStats {
    fn default() -> Self {
        Self::new(DEFAULT_JACKKNIFE_GROUPS)
    }
}

impl EnsembleStats {
    pub fn new(n_groups: usize) -> Self {
        Self { groups: vec![Moments::default(); n_groups.max(2)] }
    }

    pub fn from_samples(samples: &[StokesSample]) -> Self {
        let mut stats = Self::default();
        for (i, s) in samples.iter().enumerate() {
            stats.push(i, s);
        }
        stats
    }

    pub fn push(&mut self, trajectory: usize, sample: &StokesSample) {
        let g = trajectory % self.groups.len();
        self.groups[g].push(sample);
    }

    /// Merges an accumulator that saw a disjoint set of trajectories.
    pub fn merge(&mut self, other: &EnsembleStats) -> Result<()> {
        if other.groups.len() != self.groups.len() {
            return Err(Error::Contract("cannot merge accumulators with different block counts".into()));
        }
        for (a, b) in self.groups.iter_mut().zip(&other.groups) {
            a.merge(b);
        }
        Ok(())
    }

    pub fn total(&self) -> Moments {
        let mut t = Moments::default();
        for g in &self.groups {
            t.merge(g);
        }
        t
    }

    pub fn count(&self) -> u64 {
        self.groups.iter().map(|g| g.n).sum()
    }

    /// Full-sample value of `f` and its delete-one-block jackknife standard error.
    pub fn jackknife<F>(&self, f: F) -> Result<(f64, f64)>
    where
        F: Fn(&Moments) -> Result<f64>,
    {
        let full = f(&self.total())?;
        let occupied: Vec<usize> = (0..self.groups.len()).filter(|&g| self.groups[g].n > 0).collect();
        let k = occupied.len();
        if k < 2 {
            return Err(Error::Analysis("jackknife needs at least two non-empty blocks".into()));
        }
        let mut leave_out = Vec::with_capacity(k);
        for &skip in &occupied {
            let mut m = Moments::default();
            for &g in &occupied {
                if g != skip {
                    m.merge(&self.groups[g]);
                }
            }
            leave_out.push(f(&m)?);
        }
        let avg = leave_out.iter().sum::<f64>() / k as f64;
        let ss: f64 = leave_out.iter().map(|v| (v - avg).powi(2)).sum();
        Ok((full, ((k - 1) as f64 / k as f64 * ss).sqrt()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// `ρ(θ) = Var(S_θ)/|⟨S3⟩|` computed directly from the projected samples,
/// with a delete-one-block jackknife error.
pub fn dark_plane_variance(samples: &[StokesSample], theta: f64) -> Result<Estimate> {
    if samples.len() < 2 {
        return Err(Error::Analysis("need at least two samples".into()));
    }
    let groups = DEFAULT_JACKKNIFE_GROUPS.min(samples.len());
    let estimate = |skip: Option<usize>| -> Result<f64> {
        let kept = || samples.iter().enumerate().filter(|(i, _)| Some(i % groups) != skip).map(|(_, s)| s);
        let n = kept().count() as f64;
        let mean_s0 = kept().map(|s| s.s0).sum::<f64>() / n;
        let mean_s3 = kept().map(|s| s.s3).sum::<f64>() / n;
        if !(mean_s3.abs() > 0.0) || mean_s3.abs() < 1e-9 * mean_s0.abs() {
            return Err(Error::Analysis(format!("degenerate ensemble: <S3> = {mean_s3:.3e}")));
        }
        let mean = kept().map(|s| s.s_theta(theta)).sum::<f64>() / n;
        let var = kept().map(|s| (s.s_theta(theta) - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok(var / mean_s3.abs())
    };
    let value = estimate(None)?;
    let leave_out: Vec<f64> = (0..groups).map(|g| estimate(Some(g))).collect::<Result<_>>()?;
    let k = groups as f64;
    let avg = leave_out.iter().sum::<f64>() / k;
    let ss: f64 = leave_out.iter().map(|v| (v - avg).powi(2)).sum();
    Ok(Estimate { value, std_error: ((k - 1.0) / k * ss).sqrt() })
}

/// Principal axes of the dark-plane covariance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremalAngles {
    /// Angle of minimal variance in `[0, π)`.
    pub theta_k: f64,
    pub rho_s: f64,
    pub rho_a: f64,
    pub se_theta: f64,
    pub se_s: f64,
    pub se_a: f64,
    /// Half-wave-plate angle `Φ = θ/4` (rad).
    pub waveplate_angle: f64,
    /// Eigenvalues are indistinguishable at this sample size; `theta_k` is arbitrary.
    pub degenerate: bool,
    pub n_trajectories: u64,
}

fn principal_axes(c: [[f64; 2]; 2]) -> (f64, f64, f64) {
    let half_tr = 0.5 * (c[0][0] + c[1][1]);
    let half_diff = 0.5 * (c[0][0] - c[1][1]);
    let r = half_diff.hypot(c[0][1]);
    let theta_max = 0.5 * (2.0 * c[0][1]).atan2(c[0][0] - c[1][1]);
    let theta_min = (theta_max + 0.5 * PI).rem_euclid(PI);
    (theta_min, half_tr - r, half_tr + r)
}

/// Wraps an axial angle difference into `(-π/2, π/2]`.
pub fn wrap_axial(d: f64) -> f64 {
    let w = d.rem_euclid(PI);
    if w > 0.5 * PI {
        w - PI
    } else {
        w
    }
}

pub fn find_extremal_angles(stats: &EnsembleStats) -> Result<ExtremalAngles> {
    let total = stats.total();
    let (theta_k, rho_s, rho_a) = principal_axes(total.relative_dark_covariance()?);
    let (_, se_s) = stats.jackknife(|m| Ok(principal_axes(m.relative_dark_covariance()?).1))?;
    let (_, se_a) = stats.jackknife(|m| Ok(principal_axes(m.relative_dark_covariance()?).2))?;
    let (_, se_theta) =
        stats.jackknife(|m| Ok(theta_k + wrap_axial(principal_axes(m.relative_dark_covariance()?).0 - theta_k)))?;
    let n = total.count();
    // eigenvalue splitting of an isotropic Gaussian sample is Rayleigh with σ ≈ 2/√n
    let split = (rho_a - rho_s) / (0.5 * (rho_a + rho_s));
    let degenerate = split < 6.0 / (n as f64).sqrt();
    Ok(ExtremalAngles {
        theta_k,
        rho_s,
        rho_a,
        se_theta,
        se_s,
        se_a,
        waveplate_angle: theta_k / 4.0,
        degenerate,
        n_trajectories: n,
    })
}

/// Beam-splitter loss: `(1 - loss)·ρ + loss`.
pub fn apply_detection_loss(rho: f64, loss_fraction: f64) -> Result<f64> {
    if !(rho >= 0.0) {
        return Err(Error::Domain(format!("relative variance must be >= 0, got {rho}")));
    }
    if !(0.0..1.0).contains(&loss_fraction) {
        return Err(Error::Domain(format!("loss must lie in [0, 1), got {loss_fraction}")));
    }
    Ok((1.0 - loss_fraction) * rho + loss_fraction)
}

pub fn to_db(rho: f64) -> f64 {
    10.0 * rho.log10()
}

/// Ratio of the neglected symmetric-ordering correction to `⟨S0⟩`, `n_points/(4⟨S0⟩)`.
pub fn ordering_correction_ratio(n_points: usize, mean_s0: f64) -> f64 {
    n_points as f64 / (4.0 * mean_s0.abs())
}

/// One point of a squeezing-versus-energy curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqueezingCurvePoint {
    /// Total input energy (J).
    pub energy: f64,
    pub theta_k: f64,
    pub rho_s: f64,
    pub rho_a: f64,
    pub se_theta: f64,
    pub se_s: f64,
    pub se_a: f64,
    pub n_trajectories: u64,
    pub degenerate: bool,
}

impl SqueezingCurvePoint {
    pub fn from_extremal(energy: f64, ext: &ExtremalAngles) -> Self {
        Self {
            energy,
            theta_k: ext.theta_k,
            rho_s: ext.rho_s,
            rho_a: ext.rho_a,
            se_theta: ext.se_theta,
            se_s: ext.se_s,
            se_a: ext.se_a,
            n_trajectories: ext.n_trajectories,
            degenerate: ext.degenerate,
        }
    }

    pub fn waveplate_angle(&self) -> f64 {
        self.theta_k / 4.0
    }

    /// The same point as seen through a detection path with linear loss.
    pub fn with_loss(&self, loss_fraction: f64) -> Result<Self> {
        Ok(Self {
            rho_s: apply_detection_loss(self.rho_s, loss_fraction)?,
            rho_a: apply_detection_loss(self.rho_a, loss_fraction)?,
            se_s: (1.0 - loss_fraction) * self.se_s,
            se_a: (1.0 - loss_fraction) * self.se_a,
            ..*self
        })
    }
}
