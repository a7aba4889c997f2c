//! Split-step integration of the Raman-modified stochastic nonlinear
//! Schrödinger equation
//!
//! ```text
//! ∂φ/∂ζ = (i/2) ∂²φ/∂τ² + i Γ φ + i [∫ h(τ-τ') |φ(τ')|² dτ'] φ
//! ```
//!
//! for both polarization fields, which evolve independently. Each step is a
//! symmetric (Strang) split: half a dispersion step in the frequency domain,
//! a full nonlinear-plus-noise phase rotation in the time domain, and another
//! half dispersion step. The nonlinear substep is a pure phase per time bin,
//! so `|φ|²` is constant across it and the start-of-substep intensity is also
//! its midpoint value. Inside [`Propagator::propagate`] consecutive half steps
//! are fused into full ones and only split again where the field is observed.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{aliasing_guard_with_floor, GuardStatus, SimGrid, DEFAULT_ALIAS_THRESHOLD};
use crate::pulse::FieldState;
use crate::raman::{RamanNoise, Response};

/// Largest permitted nonlinear phase per step at the pulse peak (rad).
pub const MAX_PHASE_PER_STEP: f64 = 0.1;

/// How often (in steps) the field is checked for non-finite values.
const FINITE_CHECK_INTERVAL: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Second-order symmetric splitting.
    Strang,
    /// First-order splitting (dispersion then nonlinearity), for convergence studies.
    Lie,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepperConfig {
    pub d_zeta: f64,
    pub scheme: Scheme,
    /// Add Wigner vacuum noise to the initial fields.
    pub vacuum_noise: bool,
    /// Include the Raman reservoir noise `Γ`.
    pub raman_noise: bool,
    /// Use the delayed Raman response; otherwise `h = δ`.
    pub raman_response: bool,
    pub dispersion: bool,
    /// Kerr/Raman intensity term.
    pub nonlinearity: bool,
}

impl StepperConfig {
    /// Step-size rule `1e-3·max(1, 1/A²)`, capped at `0.01`.
    pub fn default_step(amplitude: f64) -> f64 {
        let a2 = amplitude * amplitude;
        let scale = if a2 > 0.0 { (1.0 / a2).max(1.0) } else { f64::INFINITY };
        (1e-3 * scale).min(0.01)
    }

    /// Everything on, default step for the given amplitude.
    pub fn full(amplitude: f64) -> Self {
        Self {
            d_zeta: Self::default_step(amplitude),
            scheme: Scheme::Strang,
            vacuum_noise: true,
            raman_noise: true,
            raman_response: true,
            dispersion: true,
            nonlinearity: true,
        }
    }

    /// Deterministic mean-field run with the full response.
    pub fn deterministic(d_zeta: f64) -> Self {
        Self {
            d_zeta,
            scheme: Scheme::Strang,
            vacuum_noise: false,
            raman_noise: false,
            raman_response: true,
            dispersion: true,
            nonlinearity: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_zeta.is_finite() && self.d_zeta > 0.0) {
            return Err(Error::Validation(format!("d_zeta must be positive, got {}", self.d_zeta)));
        }
        Ok(())
    }
}

/// Precomputed per-step factors for one step size.
#[derive(Clone, Debug)]
struct StepPlan {
    d_zeta: f64,
    /// Half-step dispersion factor including the 1/n of the inverse transform.
    half: Vec<Complex64>,
    full: Vec<Complex64>,
    noise: Option<RamanNoise>,
}

/// Per-trajectory scratch buffers.
#[derive(Clone, Debug)]
pub struct Workspace {
    mix: Vec<Complex64>,
    noise: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Workspace {
    pub fn new(grid: &SimGrid) -> Self {
        let n = grid.n_points();
        Self {
            mix: vec![Complex64::new(0.0, 0.0); n],
            noise: vec![Complex64::new(0.0, 0.0); n],
            scratch: grid.scratch(),
        }
    }
}

/// `|φ(τ)|²` and `|φ̃(ω)|²` (FFT order) of both polarizations at one position.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub zeta: f64,
    pub intensity: [Vec<f64>; 2],
    pub spectral_power: [Vec<f64>; 2],
}

impl Snapshot {
    pub fn capture(state: &FieldState, grid: &SimGrid) -> Result<Self> {
        let spec = |f: &[Complex64]| -> Result<Vec<f64>> {
            Ok(grid.forward_spectrum(f)?.iter().map(|v| v.norm_sqr()).collect())
        };
        Ok(Self {
            zeta: state.zeta,
            intensity: [
                state.phi_x.iter().map(|v| v.norm_sqr()).collect(),
                state.phi_y.iter().map(|v| v.norm_sqr()).collect(),
            ],
            spectral_power: [spec(&state.phi_x)?, spec(&state.phi_y)?],
        })
    }
}

/// Diagnostics collected during a propagation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PropagationReport {
    pub steps: usize,
    pub d_zeta: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Propagator {
    grid: SimGrid,
    config: StepperConfig,
    /// `h̃(ω)/n`; `None` for an instantaneous response.
    response: Option<Vec<Complex64>>,
    noise_density: Option<Vec<f64>>,
    /// Expected per-bin `|φ̃|²` of the vacuum noise, subtracted by the aliasing guard.
    alias_floor: f64,
    base: StepPlan,
}

impl Propagator {
    /// `noise_density` is the Raman spectral density `S(ω_k)`; it is ignored
    /// unless `config.raman_noise` is set.
    pub fn new(
        grid: &SimGrid,
        response: &Response,
        noise_density: Option<&[f64]>,
        config: StepperConfig,
    ) -> Result<Self> {
        config.validate()?;
        if response.spectrum().len() != grid.n_points() {
            return Err(Error::Contract("response was built on a different grid".into()));
        }
        let n = grid.n_points() as f64;
        let response = if config.nonlinearity && config.raman_response && !response.is_instantaneous() {
            Some(response.spectrum().iter().map(|v| v / n).collect())
        } else {
            None
        };
        let noise_density = match (config.raman_noise, noise_density) {
            (true, Some(s)) => {
                if s.len() != grid.n_points() {
                    return Err(Error::Contract("noise spectrum length does not match grid".into()));
                }
                Some(s.to_vec())
            }
            (true, None) => {
                return Err(Error::Validation("raman_noise is on but no noise spectrum was supplied".into()))
            }
            _ => None,
        };
        let mut prop = Self {
            grid: grid.clone(),
            response,
            noise_density,
            alias_floor: 0.0,
            base: StepPlan { d_zeta: config.d_zeta, half: vec![], full: vec![], noise: None },
            config,
        };
        prop.base = prop.plan(prop.config.d_zeta)?;
        Ok(prop)
    }

    /// Sets the vacuum noise floor used by the aliasing guard to `T/(2·n̄)` per bin.
    pub fn with_vacuum_floor(mut self, nbar: f64) -> Self {
        self.alias_floor = self.grid.tau_window() / (2.0 * nbar);
        self
    }

    pub fn config(&self) -> &StepperConfig {
        &self.config
    }

    pub fn grid(&self) -> &SimGrid {
        &self.grid
    }

    fn plan(&self, d_zeta: f64) -> Result<StepPlan> {
        let inv_n = 1.0 / self.grid.n_points() as f64;
        let factor = |frac: f64| -> Vec<Complex64> {
            self.grid
                .omega()
                .iter()
                .map(|w| {
                    if self.config.dispersion {
                        Complex64::from_polar(inv_n, -0.5 * w * w * frac * d_zeta)
                    } else {
                        Complex64::new(inv_n, 0.0)
                    }
                })
                .collect()
        };
        let noise = match &self.noise_density {
            Some(s) => {
                let n = RamanNoise::new(&self.grid, s, d_zeta)?;
                (!n.is_silent()).then_some(n)
            }
            None => None,
        };
        Ok(StepPlan { d_zeta, half: factor(0.5), full: factor(1.0), noise })
    }

    fn check_phase_bound(&self, state: &FieldState, d_zeta: f64) -> Result<()> {
        if !self.config.nonlinearity {
            return Ok(());
        }
        let peak = state
            .phi_x
            .iter()
            .chain(&state.phi_y)
            .map(|v| v.norm_sqr())
            .fold(0.0, f64::max);
        let phase = peak * d_zeta;
        if phase >= MAX_PHASE_PER_STEP {
            return Err(Error::Validation(format!(
                "nonlinear phase per step {phase:.3} rad exceeds {MAX_PHASE_PER_STEP}; reduce d_zeta"
            )));
        }
        Ok(())
    }

    fn disperse(&self, factor: &[Complex64], state: &mut FieldState, ws: &mut Workspace) {
        if !self.config.dispersion {
            return;
        }
        for field in [&mut state.phi_x, &mut state.phi_y] {
            self.grid.raw_to_spectrum(field, &mut ws.scratch);
            for (v, f) in field.iter_mut().zip(factor) {
                *v *= f;
            }
            self.grid.raw_to_time(field, &mut ws.scratch);
        }
    }

    fn nonlinear<R: Rng + ?Sized>(&self, plan: &StepPlan, state: &mut FieldState, rng: &mut R, ws: &mut Workspace) {
        let kerr = self.config.nonlinearity;
        if !kerr && plan.noise.is_none() {
            return;
        }
        let dz = plan.d_zeta;
        // mix = V_x + i V_y
        if kerr {
            for ((m, x), y) in ws.mix.iter_mut().zip(&state.phi_x).zip(&state.phi_y) {
                *m = Complex64::new(x.norm_sqr(), y.norm_sqr());
            }
            if let Some(h) = &self.response {
                self.grid.raw_to_spectrum(&mut ws.mix, &mut ws.scratch);
                for (m, hk) in ws.mix.iter_mut().zip(h) {
                    *m *= hk;
                }
                self.grid.raw_to_time(&mut ws.mix, &mut ws.scratch);
            }
        } else {
            ws.mix.iter_mut().for_each(|m| *m = Complex64::new(0.0, 0.0));
        }
        if let Some(noise) = &plan.noise {
            noise.sample_pair(rng, &self.grid, &mut ws.noise, &mut ws.scratch);
            for (m, g) in ws.mix.iter_mut().zip(&ws.noise) {
                *m += g;
            }
        }
        for ((x, y), m) in state.phi_x.iter_mut().zip(state.phi_y.iter_mut()).zip(&ws.mix) {
            *x *= Complex64::cis(m.re * dz);
            *y *= Complex64::cis(m.im * dz);
        }
    }

    fn ensure_finite(state: &FieldState) -> Result<()> {
        if state.is_finite() {
            Ok(())
        } else {
            Err(Error::Integration { zeta: state.zeta, message: "non-finite field value".into() })
        }
    }

    fn single_step<R: Rng + ?Sized>(
        &self,
        plan: &StepPlan,
        state: &mut FieldState,
        rng: &mut R,
        ws: &mut Workspace,
    ) -> Result<()> {
        match self.config.scheme {
            Scheme::Strang => {
                self.disperse(&plan.half, state, ws);
                self.nonlinear(plan, state, rng, ws);
                self.disperse(&plan.half, state, ws);
            }
            Scheme::Lie => {
                self.disperse(&plan.full, state, ws);
                self.nonlinear(plan, state, rng, ws);
            }
        }
        state.zeta += plan.d_zeta;
        Self::ensure_finite(state)
    }

    /// Advances `state` by one step of the configured `d_zeta`.
    pub fn step<R: Rng + ?Sized>(&self, state: &mut FieldState, rng: &mut R, ws: &mut Workspace) -> Result<()> {
        if state.len() != self.grid.n_points() {
            return Err(Error::Contract("state does not match grid".into()));
        }
        Self::ensure_finite(state)?;
        self.check_phase_bound(state, self.base.d_zeta)?;
        self.single_step(&self.base, state, rng, ws)
    }

    /// Propagates to `state.zeta + zeta_max` without observers.
    pub fn propagate<R: Rng + ?Sized>(
        &self,
        state: &mut FieldState,
        zeta_max: f64,
        rng: &mut R,
        ws: &mut Workspace,
    ) -> Result<PropagationReport> {
        self.propagate_observed(state, zeta_max, &[], rng, ws, |_| Ok(()))
    }

    /// Propagates over `zeta_max`, calling `observer` at each requested
    /// position in `snapshots` (relative to the start, clamped to `[0, zeta_max]`).
    ///
    /// The step is the largest `zeta_max/k` not exceeding the configured `d_zeta`.
    pub fn propagate_observed<R, F>(
        &self,
        state: &mut FieldState,
        zeta_max: f64,
        snapshots: &[f64],
        rng: &mut R,
        ws: &mut Workspace,
        mut observer: F,
    ) -> Result<PropagationReport>
    where
        R: Rng + ?Sized,
        F: FnMut(&FieldState) -> Result<()>,
    {
        if !(zeta_max.is_finite() && zeta_max >= 0.0) {
            return Err(Error::Domain(format!("zeta_max must be >= 0, got {zeta_max}")));
        }
        if state.len() != self.grid.n_points() {
            return Err(Error::Contract("state does not match grid".into()));
        }
        Self::ensure_finite(state)?;
        let n_steps = if zeta_max == 0.0 {
            0
        } else {
            (zeta_max / self.config.d_zeta * (1.0 - 1e-12)).ceil().max(1.0) as usize
        };
        let plan_owned;
        let plan = if n_steps == 0 || (zeta_max / n_steps as f64 - self.base.d_zeta).abs() < 1e-15 {
            &self.base
        } else {
            plan_owned = self.plan(zeta_max / n_steps as f64)?;
            &plan_owned
        };
        if n_steps > 0 {
            self.check_phase_bound(state, plan.d_zeta)?;
        }
        let mut marks: Vec<usize> = snapshots
            .iter()
            .map(|z| {
                let s = (z.clamp(0.0, zeta_max) / zeta_max.max(f64::MIN_POSITIVE) * n_steps as f64).round();
                s as usize
            })
            .collect();
        marks.sort_unstable();
        marks.dedup();
        let mut next_mark = marks.iter().peekable();

        let start = state.zeta;
        let mut report = PropagationReport { steps: n_steps, d_zeta: plan.d_zeta, warnings: Vec::new() };
        if next_mark.peek() == Some(&&0) {
            observer(state)?;
            next_mark.next();
        }
        if self.config.scheme == Scheme::Lie {
            for s in 0..n_steps {
                self.single_step(plan, state, rng, ws)?;
                state.zeta = start + (s + 1) as f64 * plan.d_zeta;
                if next_mark.peek() == Some(&&(s + 1)) {
                    observer(state)?;
                    next_mark.next();
                }
            }
        } else {
            let mut synced = true;
            for s in 0..n_steps {
                if synced {
                    self.disperse(&plan.half, state, ws);
                }
                self.nonlinear(plan, state, rng, ws);
                state.zeta = start + (s as f64 + 0.5) * plan.d_zeta;
                let observe = next_mark.peek() == Some(&&(s + 1));
                if observe || s + 1 == n_steps {
                    self.disperse(&plan.half, state, ws);
                    synced = true;
                    state.zeta = start + (s + 1) as f64 * plan.d_zeta;
                    Self::ensure_finite(state)?;
                    if observe {
                        observer(state)?;
                        next_mark.next();
                    }
                } else {
                    self.disperse(&plan.full, state, ws);
                    synced = false;
                    if (s + 1) % FINITE_CHECK_INTERVAL == 0 {
                        Self::ensure_finite(state)?;
                    }
                }
            }
        }
        state.zeta = start + zeta_max;
        for (label, field) in [("x", &state.phi_x), ("y", &state.phi_y)] {
            if let GuardStatus::Warning { edge_fraction } =
                aliasing_guard_with_floor(&self.grid, field, DEFAULT_ALIAS_THRESHOLD, self.alias_floor)?
            {
                report.warnings.push(format!(
                    "aliasing guard ({label}): {edge_fraction:.3e} of spectral power at the grid edge, zeta = {:.4}",
                    state.zeta
                ));
            }
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulse::coherent_sech;
    use crate::raman::{build_response, Lorentzian, RamanModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    fn kerr_only(grid: &SimGrid, d_zeta: f64) -> Propagator {
        let mut cfg = StepperConfig::deterministic(d_zeta);
        cfg.raman_response = false;
        Propagator::new(grid, &Response::instantaneous(grid), None, cfg).unwrap()
    }

    #[test]
    fn default_step_rule() {
        assert_eq!(StepperConfig::default_step(1.0), 1e-3);
        assert_eq!(StepperConfig::default_step(2.0), 1e-3);
        assert!((StepperConfig::default_step(0.5) - 4e-3).abs() < 1e-15);
        assert_eq!(StepperConfig::default_step(0.1), 0.01);
        assert_eq!(StepperConfig::default_step(0.0), 0.01);
    }

    #[test]
    fn zero_length_is_identity() {
        let g = SimGrid::new(256, 30.0).unwrap();
        let p = kerr_only(&g, 1e-3);
        let mut s = FieldState::from_mean(&coherent_sech(1.0, &g).unwrap());
        let before = s.clone();
        p.propagate(&mut s, 0.0, &mut rng(), &mut Workspace::new(&g)).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn soliton_keeps_its_shape_short_run() {
        let g = SimGrid::new(512, 40.0).unwrap();
        let p = kerr_only(&g, 1e-3);
        let mean = coherent_sech(1.0, &g).unwrap();
        let mut s = FieldState::from_mean(&mean);
        p.propagate(&mut s, 1.0, &mut rng(), &mut Workspace::new(&g)).unwrap();
        let dev = s.phi_x.iter().zip(&mean).map(|(a, b)| (a.norm() - b.norm()).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-6, "dev {dev}");
        // fundamental soliton phase e^{iζ/2}
        let mid = g.n_points() / 2;
        assert!((s.phi_x[mid].arg() - 0.5).abs() < 1e-5);
    }

    #[test]
    fn step_matches_propagate_for_one_step() {
        let g = SimGrid::new(128, 20.0).unwrap();
        let p = kerr_only(&g, 0.01);
        let mean = coherent_sech(0.8, &g).unwrap();
        let mut a = FieldState::from_mean(&mean);
        let mut b = a.clone();
        let mut ws = Workspace::new(&g);
        p.step(&mut a, &mut rng(), &mut ws).unwrap();
        p.propagate(&mut b, 0.01, &mut rng(), &mut ws).unwrap();
        for (x, y) in a.phi_x.iter().zip(&b.phi_x) {
            assert!((x - y).norm() < 1e-14);
        }
        assert!((a.zeta - 0.01).abs() < 1e-15);
    }

    #[test]
    fn phase_bound_enforced() {
        let g = SimGrid::new(128, 20.0).unwrap();
        let p = kerr_only(&g, 0.05);
        let mut s = FieldState::from_mean(&coherent_sech(2.0, &g).unwrap());
        assert!(matches!(p.step(&mut s, &mut rng(), &mut Workspace::new(&g)), Err(Error::Validation(_))));
    }

    #[test]
    fn nan_is_integration_failure() {
        let g = SimGrid::new(64, 10.0).unwrap();
        let p = kerr_only(&g, 0.01);
        let mut s = FieldState::from_mean(&coherent_sech(0.5, &g).unwrap());
        s.phi_y[3] = Complex64::new(f64::NAN, 0.0);
        let err = p.propagate(&mut s, 0.1, &mut rng(), &mut Workspace::new(&g)).unwrap_err();
        assert!(matches!(err, Error::Integration { .. }));
    }

    #[test]
    fn dispersion_preserves_spectral_magnitude() {
        let g = SimGrid::new(256, 30.0).unwrap();
        let mut cfg = StepperConfig::deterministic(0.05);
        cfg.nonlinearity = false;
        let p = Propagator::new(&g, &Response::instantaneous(&g), None, cfg).unwrap();
        let mut s = FieldState::from_mean(&coherent_sech(1.0, &g).unwrap());
        let before = g.forward_spectrum(&s.phi_x).unwrap();
        let mut ws = Workspace::new(&g);
        for _ in 0..10 {
            p.step(&mut s, &mut rng(), &mut ws).unwrap();
            let after = g.forward_spectrum(&s.phi_x).unwrap();
            for (a, b) in before.iter().zip(&after) {
                assert!((a.norm() - b.norm()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_propagation_is_linear() {
        let g = SimGrid::new(256, 30.0).unwrap();
        let mut cfg = StepperConfig::deterministic(0.05);
        cfg.nonlinearity = false;
        let p = Propagator::new(&g, &Response::instantaneous(&g), None, cfg).unwrap();
        let f: Vec<Complex64> = g.tau().iter().map(|t| Complex64::new((-t * t).exp(), 0.0)).collect();
        let h: Vec<Complex64> = g.tau().iter().map(|t| Complex64::new(0.0, (-(t - 2.0).powi(2)).exp())).collect();
        let sum: Vec<Complex64> = f.iter().zip(&h).map(|(a, b)| a + b).collect();
        let mut ws = Workspace::new(&g);
        let run = |v: &[Complex64], ws: &mut Workspace| {
            let mut s = FieldState::from_mean(v);
            p.propagate(&mut s, 1.0, &mut rng(), ws).unwrap();
            s.phi_x
        };
        let (a, b, c) = (run(&f, &mut ws), run(&h, &mut ws), run(&sum, &mut ws));
        for k in 0..g.n_points() {
            assert!((c[k] - a[k] - b[k]).norm() < 1e-10);
        }
    }

    #[test]
    fn raman_conserves_photons_and_redshifts() {
        let g = SimGrid::new(512, 40.0).unwrap();
        let model = RamanModel::new(vec![Lorentzian { center: 6.0, width: 4.0, strength: 1.0 }], 0.8).unwrap();
        let resp = build_response(&model, &g).unwrap();
        let p = Propagator::new(&g, &resp, None, StepperConfig::deterministic(2e-3)).unwrap();
        let mut s = FieldState::from_mean(&coherent_sech(1.0, &g).unwrap());
        let n0 = g.norm_sq(&s.phi_x);
        let c0 = g.spectral_centroid(&s.phi_x).unwrap();
        p.propagate(&mut s, 2.0, &mut rng(), &mut Workspace::new(&g)).unwrap();
        assert!(((g.norm_sq(&s.phi_x) - n0) / n0).abs() < 2e-8);
        assert!(g.spectral_centroid(&s.phi_x).unwrap() < c0 - 1e-3);
    }

    #[test]
    fn observer_sees_requested_positions() {
        let g = SimGrid::new(128, 20.0).unwrap();
        let p = kerr_only(&g, 0.01);
        let mut s = FieldState::from_mean(&coherent_sech(0.5, &g).unwrap());
        let mut seen = Vec::new();
        p.propagate_observed(&mut s, 1.0, &[0.0, 0.5, 1.0], &mut rng(), &mut Workspace::new(&g), |st| {
            seen.push(st.zeta);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen.len(), 3);
        for (z, want) in seen.iter().zip([0.0, 0.5, 1.0]) {
            assert!((z - want).abs() < 1e-12);
        }
    }

    #[test]
    fn fused_and_plain_steps_agree() {
        let g = SimGrid::new(256, 30.0).unwrap();
        let model = RamanModel::new(vec![Lorentzian { center: 6.0, width: 4.0, strength: 1.0 }], 0.8).unwrap();
        let resp = build_response(&model, &g).unwrap();
        let p = Propagator::new(&g, &resp, None, StepperConfig::deterministic(0.01)).unwrap();
        let mean = coherent_sech(1.0, &g).unwrap();
        let mut a = FieldState::from_mean(&mean);
        let mut b = a.clone();
        let mut ws = Workspace::new(&g);
        p.propagate(&mut a, 0.5, &mut rng(), &mut ws).unwrap();
        for _ in 0..50 {
            p.step(&mut b, &mut rng(), &mut ws).unwrap();
        }
        for (x, y) in a.phi_x.iter().zip(&b.phi_x) {
            assert!((x - y).norm() < 1e-12);
        }
    }
}
