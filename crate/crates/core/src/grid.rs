//! Uniform time grid, its conjugate frequency grid and the spectral transform.
//!
//! Transform convention: `φ̃(ω) = ∫ φ(τ) e^{+iωτ} dτ` and
//! `φ(τ) = ∫ φ̃(ω) e^{-iωτ} dω/2π`, so a field component `e^{-iωτ}` sits at
//! positive `ω` (blue side of the carrier). Frequencies are stored in FFT
//! order: `ω_k = 2πk/T` for `k = 0..n/2`, then `k - n` for the upper half.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Default threshold on the fraction of spectral power near the grid edge.
pub const DEFAULT_ALIAS_THRESHOLD: f64 = 1e-6;
/// Fraction of the frequency range (at each end) checked by the aliasing guard.
const EDGE_BAND: f64 = 0.1;

#[derive(Clone)]
pub struct SimGrid {
    n_points: usize,
    tau_window: f64,
    d_tau: f64,
    tau: Vec<f64>,
    omega: Vec<f64>,
    /// e^{-2πi jk/n}
    fft_minus: Arc<dyn Fft<f64>>,
    /// e^{+2πi jk/n}
    fft_plus: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl fmt::Debug for SimGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimGrid")
            .field("n_points", &self.n_points)
            .field("tau_window", &self.tau_window)
            .finish()
    }
}

impl SimGrid {
    pub fn new(n_points: usize, tau_window: f64) -> Result<Self> {
        if n_points < 16 || !n_points.is_power_of_two() {
            return Err(Error::Validation(format!(
                "grid size must be a power of two >= 16, got {n_points}"
            )));
        }
        if !(tau_window.is_finite() && tau_window > 0.0) {
            return Err(Error::Validation(format!("tau_window must be positive, got {tau_window}")));
        }
        let d_tau = tau_window / n_points as f64;
        let tau = (0..n_points).map(|j| -0.5 * tau_window + j as f64 * d_tau).collect();
        let d_omega = 2.0 * PI / tau_window;
        let omega = (0..n_points).map(|k| signed_index(k, n_points) as f64 * d_omega).collect();
        let mut planner = FftPlanner::new();
        let fft_minus = planner.plan_fft_forward(n_points);
        let fft_plus = planner.plan_fft_inverse(n_points);
        let scratch_len = fft_minus
            .get_inplace_scratch_len()
            .max(fft_plus.get_inplace_scratch_len());
        Ok(Self { n_points, tau_window, d_tau, tau, omega, fft_minus, fft_plus, scratch_len })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn tau_window(&self) -> f64 {
        self.tau_window
    }

    pub fn d_tau(&self) -> f64 {
        self.d_tau
    }

    pub fn d_omega(&self) -> f64 {
        2.0 * PI / self.tau_window
    }

    /// Time samples, centred on zero: `τ_j = -T/2 + j·dτ`.
    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    /// Angular frequencies in FFT order.
    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// Nyquist angular frequency `π/dτ`.
    pub fn omega_max(&self) -> f64 {
        PI / self.d_tau
    }

    /// Index permutation that lists the FFT-ordered frequency bins in ascending `ω`.
    pub fn ascending_order(&self) -> Vec<usize> {
        let half = self.n_points / 2;
        (half..self.n_points).chain(0..half).collect()
    }

    pub fn scratch(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.scratch_len]
    }

    /// Unnormalized `Σ_j x_j e^{+iω_k j dτ}` in place.
    pub(crate) fn raw_to_spectrum(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.fft_plus.process_with_scratch(buf, scratch);
    }

    /// Unnormalized `Σ_k x_k e^{-iω_k j dτ}` in place.
    pub(crate) fn raw_to_time(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.fft_minus.process_with_scratch(buf, scratch);
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_points {
            return Err(Error::Contract(format!(
                "field length {len} does not match grid size {}",
                self.n_points
            )));
        }
        Ok(())
    }

    /// Continuous-normalized spectrum `φ̃(ω_k) ≈ ∫ φ(τ) e^{iω_kτ} dτ`, FFT order.
    ///
    /// Parseval: `Σ|φ|²·dτ = Σ|φ̃|²·dω/2π`.
    pub fn forward_spectrum(&self, field: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(field.len())?;
        let mut buf = field.to_vec();
        let mut scratch = self.scratch();
        self.raw_to_spectrum(&mut buf, &mut scratch);
        // τ_0 = -T/2 contributes e^{-iπk} = (-1)^k
        for (k, v) in buf.iter_mut().enumerate() {
            let s = if k % 2 == 0 { self.d_tau } else { -self.d_tau };
            *v *= s;
        }
        Ok(buf)
    }

    /// Inverse of [`SimGrid::forward_spectrum`].
    pub fn inverse_spectrum(&self, spectrum: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(spectrum.len())?;
        let scale = 1.0 / (self.n_points as f64 * self.d_tau);
        let mut buf: Vec<Complex64> = spectrum
            .iter()
            .enumerate()
            .map(|(k, v)| if k % 2 == 0 { v * scale } else { -v * scale })
            .collect();
        let mut scratch = self.scratch();
        self.raw_to_time(&mut buf, &mut scratch);
        Ok(buf)
    }

    /// `Σ |φ|² dτ`.
    pub fn norm_sq(&self, field: &[Complex64]) -> f64 {
        field.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.d_tau
    }

    /// Power-weighted mean frequency of a field.
    pub fn spectral_centroid(&self, field: &[Complex64]) -> Result<f64> {
        let spec = self.forward_spectrum(field)?;
        let (mut num, mut den) = (0.0, 0.0);
        for (s, w) in spec.iter().zip(&self.omega) {
            let p = s.norm_sqr();
            num += p * w;
            den += p;
        }
        if den == 0.0 {
            return Ok(0.0);
        }
        Ok(num / den)
    }
}

fn signed_index(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GuardStatus {
    Ok,
    /// Fraction of the (floor-corrected) spectral power found in the edge band.
    Warning { edge_fraction: f64 },
}

impl GuardStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, GuardStatus::Ok)
    }
}

/// Flags fields with more than `threshold` of their spectral power in the
/// outer 10 % of the frequency grid.
pub fn aliasing_guard(grid: &SimGrid, field: &[Complex64], threshold: f64) -> Result<GuardStatus> {
    aliasing_guard_with_floor(grid, field, threshold, 0.0)
}

/// As [`aliasing_guard`], after subtracting a flat per-bin power floor
/// (the expected `|φ̃_k|²` of white vacuum noise) from the edge band.
pub fn aliasing_guard_with_floor(
    grid: &SimGrid,
    field: &[Complex64],
    threshold: f64,
    floor_per_bin: f64,
) -> Result<GuardStatus> {
    let spec = grid.forward_spectrum(field)?;
    let cutoff = (1.0 - EDGE_BAND) * grid.omega_max();
    let mut total = 0.0;
    let mut edge = 0.0;
    let mut edge_bins = 0usize;
    for (s, w) in spec.iter().zip(grid.omega()) {
        let p = s.norm_sqr();
        total += p;
        if w.abs() >= cutoff {
            edge += p;
            edge_bins += 1;
        }
    }
    if total == 0.0 {
        return Ok(GuardStatus::Ok);
    }
    let edge = (edge - floor_per_bin * edge_bins as f64).max(0.0);
    let fraction = edge / total;
    if fraction > threshold {
        Ok(GuardStatus::Warning { edge_fraction: fraction })
    } else {
        Ok(GuardStatus::Ok)
    }
}

/// Full width at half maximum of a sampled single-peaked profile, with linear
/// interpolation at the two outermost half-maximum crossings.
pub fn fwhm(x: &[f64], y: &[f64]) -> Option<f64> {
    let (imax, &peak) = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    if !(peak > 0.0) || x.len() != y.len() {
        return None;
    }
    let half = 0.5 * peak;
    let cross = |i: usize, j: usize| x[i] + (half - y[i]) * (x[j] - x[i]) / (y[j] - y[i]);
    let left = (1..=imax).rev().find(|&i| y[i - 1] < half).map(|i| cross(i - 1, i))?;
    let right = (imax..y.len() - 1).find(|&i| y[i + 1] < half).map(|i| cross(i, i + 1))?;
    Some(right - left)
}

/// RMS width of an intensity profile about its centroid.
pub fn rms_width(grid: &SimGrid, intensity: &[f64]) -> f64 {
    let total: f64 = intensity.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let mean = grid.tau.iter().zip(intensity).map(|(t, p)| t * p).sum::<f64>() / total;
    let var = grid.tau.iter().zip(intensity).map(|(t, p)| (t - mean).powi(2) * p).sum::<f64>() / total;
    var.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(SimGrid::new(8, 10.0).is_err());
        assert!(SimGrid::new(100, 10.0).is_err());
        assert!(SimGrid::new(64, 0.0).is_err());
    }

    #[test]
    fn grid_layout() {
        let g = SimGrid::new(64, 8.0).unwrap();
        assert!((g.tau().iter().map(|_| g.d_tau()).sum::<f64>() - 8.0).abs() < 1e-12);
        let w = g.omega();
        assert_eq!(w[0], 0.0);
        assert!((w[32] + g.omega_max()).abs() < 1e-12, "single Nyquist point at -n/2");
        for k in 1..32 {
            assert_eq!(w[k], -w[64 - k]);
        }
        let asc: Vec<f64> = g.ascending_order().iter().map(|&k| w[k]).collect();
        assert!(asc.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn constant_field_is_dc() {
        let g = SimGrid::new(64, 8.0).unwrap();
        let s = g.forward_spectrum(&vec![c(1.0, 0.0); 64]).unwrap();
        assert!((s[0].re - 8.0).abs() < 1e-12);
        assert!(s[1..].iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn length_mismatch_is_contract_error() {
        let g = SimGrid::new(64, 8.0).unwrap();
        assert!(matches!(g.forward_spectrum(&[c(1.0, 0.0); 3]), Err(Error::Contract(_))));
    }

    #[test]
    fn sech_transform_pair() {
        // window 16π puts ω = 1 on bin 8
        let g = SimGrid::new(1024, 16.0 * PI).unwrap();
        let field: Vec<Complex64> = g.tau().iter().map(|t| c(1.0 / t.cosh(), 0.0)).collect();
        let s = g.forward_spectrum(&field).unwrap();
        assert!((g.omega()[8] - 1.0).abs() < 1e-12);
        let exact = |w: f64| PI / (PI * w / 2.0).cosh();
        assert!((s[0].re / exact(0.0) - 1.0).abs() < 1e-6);
        assert!((s[8].re / exact(1.0) - 1.0).abs() < 1e-6);
        assert!(s[8].im.abs() < 1e-9);
    }

    #[test]
    fn guard_flags_nyquist_tone() {
        let g = SimGrid::new(256, 20.0).unwrap();
        let pulse: Vec<Complex64> = g.tau().iter().map(|t| c((-t * t).exp(), 0.0)).collect();
        assert_eq!(aliasing_guard(&g, &pulse, DEFAULT_ALIAS_THRESHOLD).unwrap(), GuardStatus::Ok);
        let tone: Vec<Complex64> =
            (0..256).map(|j| c(if j % 2 == 0 { 1.0 } else { -1.0 }, 0.0)).collect();
        assert!(!aliasing_guard(&g, &tone, DEFAULT_ALIAS_THRESHOLD).unwrap().is_ok());
    }

    fn field_strategy(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| c(a, b)), n)
    }

    proptest! {
        #[test]
        fn parseval_and_round_trip(f in field_strategy(128)) {
            let g = SimGrid::new(128, 12.5).unwrap();
            let s = g.forward_spectrum(&f).unwrap();
            let lhs = g.norm_sq(&f);
            let rhs = s.iter().map(|v| v.norm_sqr()).sum::<f64>() * g.d_omega() / (2.0 * PI);
            prop_assert!(((lhs - rhs) / lhs).abs() < 1e-12);
            let back = g.inverse_spectrum(&s).unwrap();
            let scale = f.iter().map(|v| v.norm()).fold(0.0, f64::max);
            for (a, b) in f.iter().zip(&back) {
                prop_assert!((a - b).norm() < 1e-12 * scale);
            }
        }

        #[test]
        fn linearity(f in field_strategy(64), h in field_strategy(64), a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let g = SimGrid::new(64, 5.0).unwrap();
            let combo: Vec<Complex64> = f.iter().zip(&h).map(|(x, y)| x * a + y * b).collect();
            let lhs = g.forward_spectrum(&combo).unwrap();
            let sf = g.forward_spectrum(&f).unwrap();
            let sh = g.forward_spectrum(&h).unwrap();
            let scale = lhs.iter().map(|v| v.norm()).fold(1.0, f64::max);
            for k in 0..64 {
                prop_assert!((lhs[k] - (sf[k] * a + sh[k] * b)).norm() < 1e-12 * scale);
            }
        }
    }

    #[test]
    fn widths_of_known_profiles() {
        let g = SimGrid::new(1024, 40.0).unwrap();
        let sech2: Vec<f64> = g.tau().iter().map(|t| 1.0 / t.cosh().powi(2)).collect();
        // 2·acosh(√2)
        assert!((fwhm(g.tau(), &sech2).unwrap() - 1.762_747_174).abs() < 1e-3);
        let gauss: Vec<f64> = g.tau().iter().map(|t| (-(t - 1.0) * (t - 1.0)).exp()).collect();
        assert!((rms_width(&g, &gauss) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(fwhm(g.tau(), &vec![0.0; 1024]), None);
    }
}
