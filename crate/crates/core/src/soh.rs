//! Finite-volume solver for the self-organized hydrodynamics (SOH) system
//!
//!   d_t rho + div(rho c1 Omega) = 0,
//!   d_t Omega + k_d r (Omega . grad) Omega + (r / l) (I - Omega Omega) grad(rho) / rho = 0,
//!
//! with c1 = l sigma / r, on a periodic 1D or 2D grid.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gci::solve_chi_converged;
use crate::vecops::{dot, orthonormal_complement};
use crate::vmf::{solve_concentration, ModelParams};

/// Largest admissible dt * speed / dx.
pub const CFL_MAX: f64 = 0.45;
/// Densities below this fraction of the mean count as vacuum.
pub const VACUUM_FRACTION: f64 = 1e-12;
/// k_d tolerance used when coefficients are derived from the model.
pub const KD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SohCoefficients {
    pub d: usize,
    pub r: f64,
    pub sigma: f64,
    pub l: f64,
    pub kd: f64,
}

impl SohCoefficients {
    pub fn new(d: usize, r: f64, sigma: f64, l: f64, kd: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::UnsupportedDimension(d));
        }
        for (name, v) in [("r", r), ("sigma", sigma), ("l", l)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        if !kd.is_finite() {
            return Err(Error::param("kd", "must be finite"));
        }
        Ok(Self { d, r, sigma, l, kd })
    }

    /// l from the fixed point and k_d from the converged chi solution.
    pub fn from_model(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        if !params.is_subcritical() {
            return Err(Error::Supercritical(params.sigma_over_r2()));
        }
        let l = solve_concentration(params)?;
        let chi = solve_chi_converged(params.d, l, params.sigma, params.r, KD_TOL)?;
        Self::new(params.d, params.r, params.sigma, l, chi.kd())
    }

    /// Mass-flux speed l sigma / r.
    pub fn c1(&self) -> f64 {
        self.l * self.sigma / self.r
    }

    pub fn convection_speed(&self) -> f64 {
        self.kd * self.r
    }

    pub fn pressure_coefficient(&self) -> f64 {
        self.r / self.l
    }

    /// Bound on the characteristic speeds used for CFL and dissipation.
    pub fn max_speed(&self) -> f64 {
        self.c1().max(self.convection_speed().abs()) + (self.c1() * self.pressure_coefficient()).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SohState {
    coeffs: SohCoefficients,
    dx_dim: usize,
    n: usize,
    length: f64,
    time: f64,
    rho: Vec<f64>,
    /// Cell-major, d components per cell.
    omega: Vec<f64>,
}

impl SohState {
    pub fn new(
        coeffs: SohCoefficients,
        dx_dim: usize,
        n: usize,
        length: f64,
        rho: Vec<f64>,
        omega: Vec<f64>,
    ) -> Result<Self> {
        if !(1..=2).contains(&dx_dim) || dx_dim > coeffs.d {
            return Err(Error::param("dx", format!("spatial dimension {dx_dim} not supported")));
        }
        if n < 3 {
            return Err(Error::param("cells", "need at least 3 cells per dimension"));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::param("length", "must be positive"));
        }
        let cells = n.pow(dx_dim as u32);
        if rho.len() != cells || omega.len() != cells * coeffs.d {
            return Err(Error::Precondition("field lengths do not match the grid".into()));
        }
        if rho.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Precondition("density must be finite and nonnegative".into()));
        }
        let mut omega = omega;
        for w in omega.chunks_mut(coeffs.d) {
            let nrm = dot(w, w).sqrt();
            if !(nrm > 0.0 && nrm.is_finite()) {
                return Err(Error::Precondition("orientation must be a nonzero finite vector".into()));
            }
            if (nrm * nrm - 1.0).abs() > 0.0 {
                w.iter_mut().for_each(|x| *x /= nrm);
            }
        }
        let s = Self { coeffs, dx_dim, n, length, time: 0.0, rho, omega };
        s.check_vacuum()?;
        Ok(s)
    }

    /// Samples `init(x) -> (rho, Omega)` at cell centres.
    pub fn from_fn<F: Fn(&[f64]) -> (f64, Vec<f64>)>(
        coeffs: SohCoefficients,
        dx_dim: usize,
        n: usize,
        length: f64,
        init: F,
    ) -> Result<Self> {
        let cells = n.pow(dx_dim as u32);
        let h = length / n as f64;
        let mut rho = Vec::with_capacity(cells);
        let mut omega = Vec::with_capacity(cells * coeffs.d);
        for k in 0..cells {
            let x: Vec<f64> = (0..dx_dim).map(|a| ((k / n.pow(a as u32)) % n) as f64 * h + 0.5 * h).collect();
            let (r, w) = init(&x);
            if w.len() != coeffs.d {
                return Err(Error::Precondition("orientation has the wrong dimension".into()));
            }
            rho.push(r);
            omega.extend(w);
        }
        Self::new(coeffs, dx_dim, n, length, rho, omega)
    }

    pub fn coefficients(&self) -> &SohCoefficients {
        &self.coeffs
    }
    pub fn spatial_dimension(&self) -> usize {
        self.dx_dim
    }
    pub fn cells_per_dim(&self) -> usize {
        self.n
    }
    pub fn cell_count(&self) -> usize {
        self.rho.len()
    }
    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dx_dim as i32)
    }
    pub fn time(&self) -> f64 {
        self.time
    }
    pub fn rho(&self) -> &[f64] {
        &self.rho
    }
    pub fn omega(&self, k: usize) -> &[f64] {
        let d = self.coeffs.d;
        &self.omega[k * d..(k + 1) * d]
    }

    pub fn center(&self, k: usize) -> Vec<f64> {
        let h = self.spacing();
        (0..self.dx_dim).map(|a| ((k / self.n.pow(a as u32)) % self.n) as f64 * h + 0.5 * h).collect()
    }

    pub fn mass(&self) -> f64 {
        self.rho.iter().sum::<f64>() * self.cell_volume()
    }

    /// max over cells of ||Omega| - 1|.
    pub fn orientation_defect(&self) -> f64 {
        self.omega
            .chunks(self.coeffs.d)
            .map(|w| (dot(w, w).sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest dt allowed at Courant number `cfl`.
    pub fn stable_dt(&self, cfl: f64) -> f64 {
        cfl * self.spacing() / self.coeffs.max_speed()
    }

    fn neighbor(&self, k: usize, axis: usize, forward: bool) -> usize {
        let stride = self.n.pow(axis as u32);
        let i = (k / stride) % self.n;
        let j = if forward { (i + 1) % self.n } else { (i + self.n - 1) % self.n };
        k - i * stride + j * stride
    }

    fn check_vacuum(&self) -> Result<()> {
        let mean = self.rho.iter().sum::<f64>() / self.rho.len() as f64;
        let (cell, min) = self
            .rho
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        if !(min >= VACUUM_FRACTION * mean) || !(mean > 0.0) {
            return Err(Error::Vacuum { min, mean, cell });
        }
        Ok(())
    }

    /// Averages `factor`^dx fine cells into one coarse cell; orientations
    /// are mass-weighted and renormalized.
    pub fn coarsen(&self, factor: usize) -> Result<SohState> {
        if factor == 0 || self.n % factor != 0 {
            return Err(Error::param("factor", "must divide the cell count"));
        }
        let nc = self.n / factor;
        let d = self.coeffs.d;
        let cells = nc.pow(self.dx_dim as u32);
        let mut rho = vec![0.0; cells];
        let mut mom = vec![0.0; cells * d];
        for k in 0..self.cell_count() {
            let mut kc = 0;
            for a in 0..self.dx_dim {
                let i = (k / self.n.pow(a as u32)) % self.n;
                kc += (i / factor) * nc.pow(a as u32);
            }
            rho[kc] += self.rho[k];
            for c in 0..d {
                mom[kc * d + c] += self.rho[k] * self.omega[k * d + c];
            }
        }
        let per = factor.pow(self.dx_dim as u32) as f64;
        rho.iter_mut().for_each(|x| *x /= per);
        let mut out = SohState::new(self.coeffs, self.dx_dim, nc, self.length, rho, mom)?;
        out.time = self.time;
        Ok(out)
    }
}

/// One forward-Euler step: Rusanov flux for the density, centred
/// differences with local Lax-Friedrichs dissipation for Omega, then
/// renormalization.
pub fn soh_step(state: &SohState, dt: f64) -> Result<SohState> {
    let c = &state.coeffs;
    let h = state.spacing();
    let bound = state.stable_dt(CFL_MAX);
    if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
        return Err(Error::TimeStep { dt, bound });
    }
    state.check_vacuum()?;
    let d = c.d;
    let c1 = c.c1();
    let conv = c.convection_speed();
    let pres = c.pressure_coefficient();
    let diss = c.max_speed();
    let rho = &state.rho;
    let om = &state.omega;
    let flux = |l: usize, r: usize, a: usize| {
        0.5 * c1 * (rho[l] * om[l * d + a] + rho[r] * om[r * d + a]) - 0.5 * c1 * (rho[r] - rho[l])
    };

    let cells = state.cell_count();
    let updated: Vec<(f64, Vec<f64>)> = (0..cells)
        .into_par_iter()
        .map(|k| {
            let w = &om[k * d..(k + 1) * d];
            let mut drho = 0.0;
            let mut conv_term = vec![0.0; d];
            let mut lap = vec![0.0; d];
            let mut grad = vec![0.0; d];
            for a in 0..state.dx_dim {
                let kp = state.neighbor(k, a, true);
                let km = state.neighbor(k, a, false);
                drho += flux(k, kp, a) - flux(km, k, a);
                for i in 0..d {
                    let (p, m) = (om[kp * d + i], om[km * d + i]);
                    conv_term[i] += w[a] * (p - m) / (2.0 * h);
                    lap[i] += p - 2.0 * w[i] + m;
                }
                grad[a] = (rho[kp] - rho[km]) / (2.0 * h * rho[k]);
            }
            let wg = dot(w, &grad);
            let mut new_w: Vec<f64> = (0..d)
                .map(|i| {
                    w[i] - dt * (conv * conv_term[i] + pres * (grad[i] - w[i] * wg))
                        + 0.5 * diss * dt / h * lap[i]
                })
                .collect();
            if new_w.as_slice() != w {
                let nrm = dot(&new_w, &new_w).sqrt();
                new_w.iter_mut().for_each(|x| *x /= nrm);
            }
            (rho[k] - dt / h * drho, new_w)
        })
        .collect();

    let mut next = state.clone();
    for (k, (r, w)) in updated.into_iter().enumerate() {
        if !r.is_finite() || w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("SOH update"));
        }
        next.rho[k] = r.max(0.0);
        next.omega[k * d..(k + 1) * d].copy_from_slice(&w);
    }
    next.time += dt;
    next.check_vacuum()?;
    Ok(next)
}

/// Steps to `t_final` at Courant number `cfl`, shortening the last step.
pub fn soh_run(state: &SohState, t_final: f64, cfl: f64) -> Result<SohState> {
    if !(cfl > 0.0 && cfl <= CFL_MAX) {
        return Err(Error::param("cfl", format!("must lie in (0, {CFL_MAX}]")));
    }
    let dt = state.stable_dt(cfl);
    let mut s = state.clone();
    while s.time < t_final * (1.0 - 1e-14) {
        let step = dt.min(t_final - s.time);
        s = soh_step(&s, step)?;
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaveSpeed {
    pub re: f64,
    pub im: f64,
    pub is_real: bool,
}

/// Characteristic speeds of the system linearized about (rho0, omega0) for
/// 1D perturbations along the first spatial axis. The unknowns are rho and
/// the d - 1 components of Omega orthogonal to omega0; the quasi-linear
/// matrix is assembled by evaluating the right-hand side on unit gradients.
pub fn linear_wave_speeds(rho0: f64, omega0: &[f64], coeffs: &SohCoefficients) -> Result<Vec<WaveSpeed>> {
    let d = coeffs.d;
    if omega0.len() != d {
        return Err(Error::Precondition("omega0 has the wrong dimension".into()));
    }
    if !(rho0 > 0.0) {
        return Err(Error::param("rho0", "must be positive"));
    }
    let nrm = dot(omega0, omega0).sqrt();
    let w: Vec<f64> = omega0.iter().map(|x| x / nrm).collect();
    let tangents = orthonormal_complement(&w);
    let m = d;
    // Linearized d_t U + A d_x U = 0, column j = response to a unit x-gradient of unknown j.
    let rhs = |drho: f64, dw: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; m];
        out[0] = coeffs.c1() * (drho * w[0] + rho0 * dw[0]);
        let mut grad = vec![0.0; d];
        grad[0] = drho / rho0;
        let wg = dot(&w, &grad);
        let tend: Vec<f64> = (0..d)
            .map(|i| coeffs.convection_speed() * w[0] * dw[i] + coeffs.pressure_coefficient() * (grad[i] - w[i] * wg))
            .collect();
        for (j, t) in tangents.iter().enumerate() {
            out[j + 1] = dot(t, &tend);
        }
        out
    };
    let mut a = DMatrix::zeros(m, m);
    for j in 0..m {
        let (drho, dw) = if j == 0 {
            (1.0, vec![0.0; d])
        } else {
            (0.0, tangents[j - 1].clone())
        };
        for (i, v) in rhs(drho, &dw).into_iter().enumerate() {
            a[(i, j)] = v;
        }
    }
    let scale = coeffs.max_speed();
    let mut out: Vec<WaveSpeed> = a
        .complex_eigenvalues()
        .iter()
        .map(|z| WaveSpeed { re: z.re, im: z.im, is_real: z.im.abs() <= 1e-12 * scale })
        .collect();
    out.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    Ok(out)
}
