//! Pseudo-spectral solver for the forced 2D vorticity equation
//!
//! `∂_t ω + u·∇ω = ν∇²ω − αω + f`
//!
//! on the 2π-periodic square. The nonlinear term is evaluated in physical space
//! with 2/3-rule dealiasing, time stepping is SSP-RK3 with an exact integrating
//! factor for viscosity and drag, and the forcing is Gaussian white noise on a
//! wavenumber shell added after each step with variance proportional to the step.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::spectral::SpectralGrid;
use super::FlowStats;
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Collocation points per direction.
    pub n: usize,
    pub viscosity: f64,
    /// Linear drag coefficient α.
    pub drag: f64,
    /// Inclusive band `[k_lo, k_hi]` of forced wavenumber magnitudes.
    pub forcing_shell: [f64; 2],
    /// Enstrophy injection rate `d⟨ω²⟩/2dt` of the forcing.
    pub forcing_amplitude: f64,
    pub cfl_limit: f64,
    /// Upper bound on a single internal step.
    pub max_dt: f64,
    /// Initial rms vorticity of the random start field.
    pub initial_vorticity_rms: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n: 256,
            ..Self::desk_scale()
        }
    }
}

impl SolverConfig {
    /// Reduced-resolution preset used for tests and quick runs. The viscosity,
    /// drag and forcing were tuned so that the stationary state has
    /// `u_rms ≈ 3.78` and `ω_rms ≈ 9.1`.
    pub fn desk_scale() -> Self {
        Self {
            n: 64,
            viscosity: 0.02,
            drag: 0.1,
            forcing_shell: [3.0, 5.0],
            forcing_amplitude: 45.0,
            cfl_limit: 0.4,
            max_dt: 0.01,
            initial_vorticity_rms: 9.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("solver: {m}")));
        if self.n < 8 || !self.n.is_multiple_of(2) {
            return bad("n must be even and at least 8");
        }
        if !(self.viscosity > 0.0) {
            return bad("viscosity must be positive");
        }
        if !(self.drag >= 0.0) {
            return bad("drag must be non-negative");
        }
        let [lo, hi] = self.forcing_shell;
        if !(lo > 0.0 && lo <= hi && hi <= 6.0) {
            return bad("forcing shell must satisfy 0 < k_lo <= k_hi <= 6");
        }
        if !(self.forcing_amplitude >= 0.0) {
            return bad("forcing amplitude must be non-negative");
        }
        if !(self.cfl_limit > 0.0 && self.cfl_limit < 1.0) {
            return bad("cfl limit must lie in (0, 1)");
        }
        if !(self.max_dt > 0.0) {
            return bad("max_dt must be positive");
        }
        Ok(())
    }
}

/// Fourier coefficients of the vorticity plus the simulation clock.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralState {
    pub vorticity_hat: Vec<Complex64>,
    pub time: f64,
}

impl SpectralState {
    pub fn zeros(n: usize) -> Self {
        Self {
            vorticity_hat: vec![Complex64::new(0.0, 0.0); n * n],
            time: 0.0,
        }
    }

    /// Real physical vorticity.
    pub fn vorticity(&self, grid: &SpectralGrid) -> Vec<f64> {
        grid.inverse_real(&self.vorticity_hat)
    }

    pub fn from_vorticity(grid: &SpectralGrid, field: &[f64], time: f64) -> Self {
        let mut hat = grid.forward_real(field);
        grid.dealias(&mut hat);
        hat[0] = Complex64::new(0.0, 0.0);
        Self {
            vorticity_hat: hat,
            time,
        }
    }
}

/// Moments of a state, with `energy = ⟨|u|²⟩/2` and `enstrophy = ⟨ω²⟩/2`.
pub fn flow_stats(grid: &SpectralGrid, state: &SpectralState) -> FlowStats {
    let n2 = (grid.n() * grid.n()) as f64;
    let mut u2 = 0.0;
    let mut w2 = 0.0;
    for (idx, w) in state.vorticity_hat.iter().enumerate() {
        let (kx, kz) = grid.k(idx);
        let k2 = kx * kx + kz * kz;
        let p = w.norm_sqr();
        w2 += p;
        if k2 > 0.0 {
            u2 += p / k2;
        }
    }
    let u2 = u2 / (n2 * n2);
    let w2 = w2 / (n2 * n2);
    FlowStats {
        u_rms: u2.sqrt(),
        omega_rms: w2.sqrt(),
        energy: 0.5 * u2,
        enstrophy: 0.5 * w2,
    }
}

pub struct Solver {
    pub grid: SpectralGrid,
    pub cfg: SolverConfig,
    forced: Vec<usize>,
    forcing_sigma: f64,
    decay_rate: Vec<f64>,
    work_a: Vec<Complex64>,
    work_b: Vec<Complex64>,
}

impl std::fmt::Debug for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Solver").field("cfg", &self.cfg).finish()
    }
}

impl Solver {
    pub fn new(cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = SpectralGrid::new(cfg.n);
        let [lo, hi] = cfg.forcing_shell;
        let mut shell = Vec::new();
        let mut decay_rate = Vec::with_capacity(grid.len());
        for idx in 0..grid.len() {
            let (kx, kz) = grid.k(idx);
            let k2 = kx * kx + kz * kz;
            decay_rate.push(cfg.viscosity * k2 + cfg.drag);
            let k = k2.sqrt();
            if k >= lo && k <= hi && !grid.is_aliased(idx) {
                shell.push(idx);
            }
        }
        // one representative per ±k pair
        let forced: Vec<usize> = shell
            .iter()
            .copied()
            .filter(|&idx| {
                let (kx, kz) = grid.k(idx);
                kz > 0.0 || (kz == 0.0 && kx > 0.0)
            })
            .collect();
        let forcing_sigma = if shell.is_empty() {
            0.0
        } else {
            (2.0 * cfg.forcing_amplitude / shell.len() as f64).sqrt()
        };
        let len = grid.len();
        Ok(Self {
            grid,
            cfg,
            forced,
            forcing_sigma,
            decay_rate,
            work_a: vec![Complex64::new(0.0, 0.0); len],
            work_b: vec![Complex64::new(0.0, 0.0); len],
        })
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    /// Random band-limited start field with the configured rms vorticity.
    pub fn random_state(&self, rng: &mut Rng) -> SpectralState {
        let grid = &self.grid;
        let mut state = SpectralState::zeros(grid.n());
        let [lo, hi] = self.cfg.forcing_shell;
        for idx in 0..grid.len() {
            let (kx, kz) = grid.k(idx);
            let k = (kx * kx + kz * kz).sqrt();
            let canonical = kz > 0.0 || (kz == 0.0 && kx > 0.0);
            if canonical && k >= 1.0 && k <= hi.max(lo) && !grid.is_aliased(idx) {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                let v = Complex64::new(a, b);
                state.vorticity_hat[idx] = v;
                state.vorticity_hat[grid.conjugate_index(idx)] = v.conj();
            }
        }
        let rms = flow_stats(grid, &state).omega_rms;
        if rms > 0.0 {
            let s = self.cfg.initial_vorticity_rms / rms;
            state.vorticity_hat.iter_mut().for_each(|v| *v *= s);
        }
        state
    }

    /// Dealiased `−u·∇ω` for the given vorticity spectrum, and the largest
    /// `|u_x| + |u_z|` on the grid.
    fn nonlinear(&mut self, w: &[Complex64], out: &mut [Complex64]) -> f64 {
        let grid = &self.grid;
        let i = Complex64::new(0.0, 1.0);
        // pack (u_x, ∂_x ω) and (u_z, ∂_z ω) into two complex transforms
        for idx in 0..grid.len() {
            let (kx, kz) = grid.k(idx);
            let k2 = kx * kx + kz * kz;
            let psi = if k2 > 0.0 { w[idx] / k2 } else { Complex64::new(0.0, 0.0) };
            let ux = i * kz * psi;
            let uz = -i * kx * psi;
            let wx = i * kx * w[idx];
            let wz = i * kz * w[idx];
            self.work_a[idx] = ux + i * wx;
            self.work_b[idx] = uz + i * wz;
        }
        grid.inverse(&mut self.work_a);
        grid.inverse(&mut self.work_b);
        let mut umax = 0.0f64;
        for idx in 0..grid.len() {
            let (ux, wx) = (self.work_a[idx].re, self.work_a[idx].im);
            let (uz, wz) = (self.work_b[idx].re, self.work_b[idx].im);
            umax = umax.max(ux.abs() + uz.abs());
            out[idx] = Complex64::new(-(ux * wx + uz * wz), 0.0);
        }
        grid.forward(out);
        grid.dealias(out);
        out[0] = Complex64::new(0.0, 0.0);
        umax
    }

    /// Advances `state` by one internal step, never past `until`. Returns the
    /// step length taken.
    pub fn step(&mut self, state: &mut SpectralState, until: f64, rng: &mut Rng) -> Result<f64> {
        let len = self.grid.len();
        let w0 = std::mem::take(&mut state.vorticity_hat);
        let mut nl = vec![Complex64::new(0.0, 0.0); len];
        let umax = self.nonlinear(&w0, &mut nl);

        let dx = std::f64::consts::TAU / self.n() as f64;
        let mut dt = self.cfg.max_dt.min(until - state.time);
        if umax > 0.0 {
            dt = dt.min(self.cfg.cfl_limit * dx / umax);
        }
        if !(dt > 0.0) {
            state.vorticity_hat = w0;
            return Ok(0.0);
        }

        let e_full: Vec<f64> = self.decay_rate.iter().map(|l| (-l * dt).exp()).collect();
        let e_half: Vec<f64> = self.decay_rate.iter().map(|l| (-l * dt * 0.5).exp()).collect();

        let mut s1: Vec<Complex64> = (0..len).map(|k| e_full[k] * (w0[k] + dt * nl[k])).collect();
        self.nonlinear(&s1, &mut nl);
        let mut s2: Vec<Complex64> = (0..len)
            .map(|k| 0.75 * e_half[k] * w0[k] + 0.25 / e_half[k] * (s1[k] + dt * nl[k]))
            .collect();
        self.nonlinear(&s2, &mut nl);
        for k in 0..len {
            s1[k] = (1.0 / 3.0) * e_full[k] * w0[k] + (2.0 / 3.0) * e_half[k] * (s2[k] + dt * nl[k]);
        }
        s2.clear();

        if self.forcing_sigma > 0.0 {
            let scale = self.forcing_sigma * dt.sqrt() * (len as f64) * std::f64::consts::FRAC_1_SQRT_2;
            for &idx in &self.forced {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                let kick = Complex64::new(a, b) * scale;
                s1[idx] += kick;
                let c = self.grid.conjugate_index(idx);
                s1[c] += kick.conj();
            }
        }

        let energy: f64 = s1.iter().map(|c| c.norm_sqr()).sum();
        if !energy.is_finite() {
            state.vorticity_hat = w0;
            return Err(Error::NumericalBlowup {
                time: state.time,
                detail: format!("non-finite vorticity after dt = {dt:.3e}, max |u| = {umax:.3e}"),
            });
        }
        state.vorticity_hat = s1;
        state.time = if until - (state.time + dt) < 1e-12 * until.abs().max(1.0) {
            until
        } else {
            state.time + dt
        };
        Ok(dt)
    }

    /// Steps until `state.time == until`.
    pub fn advance_to(&mut self, state: &mut SpectralState, until: f64, rng: &mut Rng) -> Result<usize> {
        let mut steps = 0;
        while state.time < until {
            self.step(state, until, rng)?;
            steps += 1;
        }
        Ok(steps)
    }
}
