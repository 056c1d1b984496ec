//! Mean-field particle simulation of the scaled kinetic equation: transport,
//! stiff self-propulsion/friction at rate 1/eps^2 and alignment with noise
//! at rate 1/eps.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_pcg::Pcg64Mcg;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecops::norm;
use crate::vmf::ModelParams;

/// Speeds at or below this fraction of r are treated as the rest point.
pub const REST_TOL: f64 = 1e-12;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of an independent sub-stream `index` of `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Particles on the torus [0, L)^dx (dx = 0: no space) with velocities in R^d.
///
/// Every particle owns its random stream, so trajectories do not depend on
/// how the work is split across threads.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    d: usize,
    dx: usize,
    length: f64,
    positions: Vec<f64>,
    velocities: Vec<f64>,
    total_mass: f64,
    rngs: Vec<Pcg64Mcg>,
}

impl ParticleEnsemble {
    /// `positions` holds N * dx coordinates, `velocities` N * d components.
    pub fn new(
        d: usize,
        dx: usize,
        length: f64,
        positions: Vec<f64>,
        velocities: Vec<f64>,
        total_mass: f64,
        seed: u64,
    ) -> Result<Self> {
        if d < 2 {
            return Err(Error::UnsupportedDimension(d));
        }
        if dx > 2 || dx > d {
            return Err(Error::param("dx", format!("spatial dimension {dx} unsupported")));
        }
        if dx > 0 && !(length > 0.0) {
            return Err(Error::param("length", "domain length must be positive"));
        }
        if velocities.is_empty() || velocities.len() % d != 0 {
            return Err(Error::param("velocities", "need a positive multiple of d values"));
        }
        let n = velocities.len() / d;
        if positions.len() != n * dx {
            return Err(Error::param("positions", format!("expected {} values", n * dx)));
        }
        if !(total_mass > 0.0) {
            return Err(Error::param("total_mass", "must be positive"));
        }
        let rngs = (0..n as u64)
            .map(|i| Pcg64Mcg::seed_from_u64(derive_seed(seed, i)))
            .collect();
        let mut ens = ParticleEnsemble {
            d,
            dx,
            length,
            positions,
            velocities,
            total_mass,
            rngs,
        };
        ens.wrap();
        Ok(ens)
    }

    pub fn len(&self) -> usize {
        self.velocities.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn spatial_dimension(&self) -> usize {
        self.dx
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Mass carried by each particle.
    pub fn weight(&self) -> f64 {
        self.total_mass / self.len() as f64
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dx..(i + 1) * self.dx]
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.velocities[i * self.d..(i + 1) * self.d]
    }

    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn speeds(&self) -> Vec<f64> {
        self.velocities.chunks(self.d).map(norm).collect()
    }

    fn wrap(&mut self) {
        let l = self.length;
        for x in &mut self.positions {
            *x = x.rem_euclid(l);
            // rem_euclid can round up to exactly l
            if *x >= l {
                *x = 0.0;
            }
        }
    }
}

/// Uniform cells over the torus with the particle indices they hold.
#[derive(Debug, Clone)]
pub struct CellDecomposition {
    dx: usize,
    length: f64,
    per_dim: usize,
    cell_of: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl CellDecomposition {
    /// `per_dim` cells along each spatial axis; a single cell when dx = 0.
    pub fn new(dx: usize, length: f64, per_dim: usize) -> Result<Self> {
        if per_dim == 0 {
            return Err(Error::param("cells", "need at least one cell"));
        }
        let per_dim = if dx == 0 { 1 } else { per_dim };
        Ok(CellDecomposition {
            dx,
            length,
            per_dim,
            cell_of: Vec::new(),
            members: vec![Vec::new(); per_dim.pow(dx as u32)],
        })
    }

    pub fn for_ensemble(ens: &ParticleEnsemble, per_dim: usize) -> Result<Self> {
        let mut cells = Self::new(ens.dx, ens.length, per_dim)?;
        cells.assign(ens);
        Ok(cells)
    }

    pub fn count(&self) -> usize {
        self.members.len()
    }

    pub fn per_dim(&self) -> usize {
        self.per_dim
    }

    /// Volume of one cell (1 without space).
    pub fn cell_volume(&self) -> f64 {
        (self.length / self.per_dim as f64).powi(self.dx as i32)
    }

    /// Center of cell `k` along each spatial axis.
    pub fn center(&self, k: usize) -> Vec<f64> {
        let h = self.length / self.per_dim as f64;
        let mut k = k;
        (0..self.dx)
            .map(|_| {
                let i = k % self.per_dim;
                k /= self.per_dim;
                (i as f64 + 0.5) * h
            })
            .collect()
    }

    fn index_of(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for &xi in x {
            let i = ((xi / self.length * self.per_dim as f64) as usize).min(self.per_dim - 1);
            idx += i * stride;
            stride *= self.per_dim;
        }
        idx
    }

    /// Rebuilds the index lists from the current positions.
    pub fn assign(&mut self, ens: &ParticleEnsemble) {
        self.cell_of = (0..ens.len()).map(|i| self.index_of(ens.position(i))).collect();
        for m in &mut self.members {
            m.clear();
        }
        for (i, &c) in self.cell_of.iter().enumerate() {
            self.members[c].push(i);
        }
    }

    /// Multilinear (cloud-in-cell) weights of the cells whose centres
    /// surround `x`, wrapping periodically. Returns the number of entries.
    pub fn linear_weights(&self, x: &[f64], out: &mut [(usize, f64); 8]) -> usize {
        let n = self.per_dim;
        if self.dx == 0 {
            out[0] = (0, 1.0);
            return 1;
        }
        out[0] = (0, 1.0);
        let mut count = 1;
        let mut stride = 1;
        for &xi in x {
            let s = xi / self.length * n as f64 - 0.5;
            let lo = s.floor();
            let frac = s - lo;
            let i0 = (lo as i64).rem_euclid(n as i64) as usize;
            let i1 = (i0 + 1) % n;
            for j in 0..count {
                let (idx, w) = out[j];
                out[j] = (idx + i0 * stride, w * (1.0 - frac));
                out[j + count] = (idx + i1 * stride, w * frac);
            }
            count *= 2;
            stride *= n;
        }
        count
    }

    pub fn members(&self, k: usize) -> &[usize] {
        &self.members[k]
    }

    pub fn cell_of(&self, i: usize) -> usize {
        self.cell_of[i]
    }
}

/// Closed-form flow of dV/ds = (alpha - beta |V|^2) V over stiff time s.
pub fn radial_map(v: &[f64], s: f64, params: &ModelParams) -> Vec<f64> {
    let mut out = v.to_vec();
    radial_in_place(&mut out, s, params.alpha(), params.beta, params.r);
    out
}

#[inline]
fn radial_in_place(v: &mut [f64], s: f64, alpha: f64, beta: f64, r: f64) {
    let y0: f64 = v.iter().map(|x| x * x).sum();
    if y0.sqrt() <= REST_TOL * r {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let e = (-2.0 * alpha * s).exp();
    let y = alpha * y0 / (beta * y0 + (alpha - beta * y0) * e);
    let k = (y / y0).sqrt();
    v.iter_mut().for_each(|x| *x *= k);
}

/// Mass-weighted mean velocity in each cell; zero for empty cells.
pub fn mean_velocity_per_cell(ens: &ParticleEnsemble, cells: &CellDecomposition) -> Vec<Vec<f64>> {
    (0..cells.count())
        .map(|k| {
            let mut u = vec![0.0; ens.d];
            let m = cells.members(k);
            if m.is_empty() {
                return u;
            }
            for &i in m {
                for (a, b) in u.iter_mut().zip(ens.velocity(i)) {
                    *a += b;
                }
            }
            u.iter_mut().for_each(|a| *a /= m.len() as f64);
            u
        })
        .collect()
}

/// How the Gaussian increments of the alignment-noise sub-step are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Independent standard normals per particle.
    #[default]
    Independent,
    /// Increments centred over each cell and rescaled by sqrt(n / (n - 1)),
    /// so the sub-step conserves every cell's momentum exactly while keeping
    /// the per-particle variance. Cells holding one particle get no noise.
    MomentumConserving,
}

/// How the frozen mean velocity seen by a particle is built from the cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// The plain mean of the particle's own cell.
    #[default]
    Cell,
    /// Cloud-in-cell: momentum and mass are deposited on cell centres with
    /// multilinear weights and the resulting means interpolated back with
    /// the same weights. Total momentum is still conserved by the
    /// relaxation, but momentum leaks between neighbouring cells at the
    /// alignment rate, which acts as a diffusion of order h^2 / eps.
    Linear,
    /// Cell mean plus a central-difference slope taken about the mean
    /// particle position of the cell, so every cell keeps its momentum
    /// while particles near a cell edge see the local mean velocity.
    Reconstructed,
}

/// Options of [`step_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct StepScheme {
    pub noise: NoiseMode,
    pub coupling: Coupling,
}

/// Cloud-in-cell mean velocity at every particle.
fn linear_mean_velocity(ens: &ParticleEnsemble, cells: &CellDecomposition) -> Vec<f64> {
    let d = ens.d;
    let nc = cells.count();
    let mut mom = vec![0.0; nc * d];
    let mut mass = vec![0.0; nc];
    let mut w = [(0usize, 0.0f64); 8];
    for i in 0..ens.len() {
        let count = cells.linear_weights(ens.position(i), &mut w);
        let v = ens.velocity(i);
        for &(k, wk) in &w[..count] {
            mass[k] += wk;
            for (a, b) in mom[k * d..(k + 1) * d].iter_mut().zip(v) {
                *a += wk * b;
            }
        }
    }
    for k in 0..nc {
        if mass[k] > 0.0 {
            mom[k * d..(k + 1) * d].iter_mut().for_each(|a| *a /= mass[k]);
        }
    }
    let mut out = vec![0.0; ens.len() * d];
    out.par_chunks_mut(d).enumerate().for_each(|(i, ui)| {
        let mut w = [(0usize, 0.0f64); 8];
        let count = cells.linear_weights(ens.position(i), &mut w);
        for &(k, wk) in &w[..count] {
            for (a, b) in ui.iter_mut().zip(&mom[k * d..(k + 1) * d]) {
                *a += wk * b;
            }
        }
    });
    out
}

/// Piecewise-linear mean velocity at every particle.
fn reconstructed_mean_velocity(ens: &ParticleEnsemble, cells: &CellDecomposition) -> Vec<f64> {
    let d = ens.d;
    let dx = ens.dx;
    let n = cells.per_dim;
    let h = cells.length / n as f64;
    let cell_u = mean_velocity_per_cell(ens, cells);
    let xbar: Vec<Vec<f64>> = (0..cells.count())
        .map(|k| {
            let m = cells.members(k);
            let mut c = vec![0.0; dx];
            for &i in m {
                for (a, b) in c.iter_mut().zip(ens.position(i)) {
                    *a += b;
                }
            }
            c.iter_mut().for_each(|a| *a /= m.len().max(1) as f64);
            c
        })
        .collect();
    // slope[k][axis * d + j] = d u_j / d x_axis
    let slope: Vec<Vec<f64>> = (0..cells.count())
        .map(|k| {
            let mut g = vec![0.0; dx * d];
            let mut stride = 1;
            for axis in 0..dx {
                let i = (k / stride) % n;
                let up = k - i * stride + ((i + 1) % n) * stride;
                let down = k - i * stride + ((i + n - 1) % n) * stride;
                if !cells.members(up).is_empty() && !cells.members(down).is_empty() {
                    for j in 0..d {
                        g[axis * d + j] = (cell_u[up][j] - cell_u[down][j]) / (2.0 * h);
                    }
                }
                stride *= n;
            }
            g
        })
        .collect();
    let mut out = vec![0.0; ens.len() * d];
    out.par_chunks_mut(d).enumerate().for_each(|(i, ui)| {
        let k = cells.cell_of[i];
        ui.copy_from_slice(&cell_u[k]);
        for (axis, x) in ens.position(i).iter().enumerate() {
            let off = x - xbar[k][axis];
            for j in 0..d {
                ui[j] += off * slope[k][axis * d + j];
            }
        }
    });
    out
}

/// One Strang-split step: radial flow over dt/2, exact OU relaxation toward
/// the frozen cell mean over dt, free transport over dt, radial flow over dt/2.
pub fn step(ens: &mut ParticleEnsemble, params: &ModelParams, dt: f64, cells: &mut CellDecomposition) -> Result<()> {
    step_with(ens, params, dt, cells, StepScheme::default())
}

/// [`step`] with a choice of noise increments and velocity coupling.
pub fn step_with(
    ens: &mut ParticleEnsemble,
    params: &ModelParams,
    dt: f64,
    cells: &mut CellDecomposition,
    scheme: StepScheme,
) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", format!("must be positive, got {dt}")));
    }
    if params.d != ens.d {
        return Err(Error::Precondition("parameter and ensemble dimensions differ".into()));
    }
    let (alpha, beta, r, eps) = (params.alpha(), params.beta, params.r, params.epsilon);
    let half = 0.5 * dt / (eps * eps);
    let d = ens.d;

    ens.velocities
        .par_chunks_mut(d)
        .for_each(|v| radial_in_place(v, half, alpha, beta, r));

    cells.assign(ens);
    let u = match scheme.coupling {
        Coupling::Cell => {
            let cell_u = mean_velocity_per_cell(ens, cells);
            let mut u = vec![0.0; ens.velocities.len()];
            u.par_chunks_mut(d).enumerate().for_each(|(i, ui)| ui.copy_from_slice(&cell_u[cells.cell_of[i]]));
            u
        }
        Coupling::Linear => linear_mean_velocity(ens, cells),
        Coupling::Reconstructed => reconstructed_mean_velocity(ens, cells),
    };
    let decay = (-dt / eps).exp();
    let noise = (params.sigma * (1.0 - (-2.0 * dt / eps).exp())).sqrt();
    let mut xi = vec![0.0; ens.velocities.len()];
    xi.par_chunks_mut(d).zip(ens.rngs.par_iter_mut()).for_each(|(x, rng)| {
        for v in x.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
    });
    if scheme.noise == NoiseMode::MomentumConserving {
        for k in 0..cells.count() {
            let m = cells.members(k);
            let n = m.len();
            let mut mean = vec![0.0; d];
            for &i in m {
                for (a, b) in mean.iter_mut().zip(&xi[i * d..(i + 1) * d]) {
                    *a += b;
                }
            }
            mean.iter_mut().for_each(|a| *a /= n.max(1) as f64);
            let scale = if n > 1 { (n as f64 / (n as f64 - 1.0)).sqrt() } else { 0.0 };
            for &i in m {
                for (x, a) in xi[i * d..(i + 1) * d].iter_mut().zip(&mean) {
                    *x = (*x - a) * scale;
                }
            }
        }
    }
    ens.velocities
        .par_chunks_mut(d)
        .zip(xi.par_chunks(d))
        .zip(u.par_chunks(d))
        .for_each(|((v, z), ui)| {
            for ((x, m), g) in v.iter_mut().zip(ui).zip(z) {
                *x = m + (*x - m) * decay + noise * g;
            }
        });

    if ens.dx > 0 {
        let dx = ens.dx;
        ens.positions
            .par_chunks_mut(dx)
            .zip(ens.velocities.par_chunks(d))
            .for_each(|(x, v)| {
                for k in 0..dx {
                    x[k] += v[k] * dt;
                }
            });
        ens.wrap();
    }

    ens.velocities
        .par_chunks_mut(d)
        .for_each(|v| radial_in_place(v, half, alpha, beta, r));
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct CellMoments {
    pub rho: f64,
    pub u: Vec<f64>,
    /// u / |u|, or the zero vector when |u| < 1e-14.
    pub omega: Vec<f64>,
    /// Particle counts of |V| in equal bins over [0, 2r).
    pub speed_hist: Vec<u64>,
}

/// Per-cell density, mean velocity, orientation and speed histogram.
pub fn moments(
    ens: &ParticleEnsemble,
    cells: &CellDecomposition,
    r: f64,
    bins: usize,
) -> Vec<CellMoments> {
    let vol = cells.cell_volume();
    let w = ens.weight();
    let us = mean_velocity_per_cell(ens, cells);
    us.into_iter()
        .enumerate()
        .map(|(k, u)| {
            let m = cells.members(k);
            let mut hist = vec![0u64; bins];
            for &i in m {
                let s = norm(ens.velocity(i));
                let b = (s / (2.0 * r) * bins as f64) as usize;
                if b < bins {
                    hist[b] += 1;
                }
            }
            let un = norm(&u);
            let omega = if un < 1e-14 {
                vec![0.0; u.len()]
            } else {
                u.iter().map(|x| x / un).collect()
            };
            CellMoments {
                rho: m.len() as f64 * w / vol,
                u,
                omega,
                speed_hist: hist,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(sigma: f64, eps: f64) -> ModelParams {
        ModelParams::new(2, 1.0, 1.0, sigma, eps).unwrap()
    }

    // classical RK4 with many substeps as the reference flow
    fn rk4_radial(v: &[f64], s: f64, p: &ModelParams) -> Vec<f64> {
        let f = |v: &[f64]| {
            let y: f64 = v.iter().map(|x| x * x).sum();
            v.iter().map(|x| (p.alpha() - p.beta * y) * x).collect::<Vec<f64>>()
        };
        let n = 20_000;
        let h = s / n as f64;
        let mut x = v.to_vec();
        for _ in 0..n {
            let k1 = f(&x);
            let x2: Vec<f64> = x.iter().zip(&k1).map(|(a, k)| a + 0.5 * h * k).collect();
            let k2 = f(&x2);
            let x3: Vec<f64> = x.iter().zip(&k2).map(|(a, k)| a + 0.5 * h * k).collect();
            let k3 = f(&x3);
            let x4: Vec<f64> = x.iter().zip(&k3).map(|(a, k)| a + h * k).collect();
            let k4 = f(&x4);
            for i in 0..x.len() {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        x
    }

    #[test]
    fn radial_map_matches_ode() {
        let p = ModelParams::new(3, 1.3, 0.7, 0.1, 0.1).unwrap();
        for v in [[0.1, 0.2, -0.05], [2.0, -1.0, 0.5], [0.9, 0.0, 0.0]] {
            for s in [0.05, 0.5, 2.0] {
                let a = radial_map(&v, s, &p);
                let b = rk4_radial(&v, s, &p);
                for k in 0..3 {
                    assert!((a[k] - b[k]).abs() < 1e-10, "{a:?} {b:?}");
                }
            }
        }
    }

    #[test]
    fn radial_map_special_cases() {
        let p = params(0.1, 0.1);
        let v = [0.6, 0.8];
        assert_eq!(radial_map(&v, 3.0, &p), v.to_vec());
        assert_eq!(radial_map(&[0.0, 0.0], 3.0, &p), vec![0.0, 0.0]);
        let far = radial_map(&[1e-3, 0.0], 50.0, &p);
        assert!((far[0] - 1.0).abs() < 1e-12);
        // y0 = r^2/2 and alpha s = 1
        let h = radial_map(&[0.5f64.sqrt(), 0.0], 1.0, &p);
        assert!((h[0] * h[0] - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn cell_means() {
        let ens = ParticleEnsemble::new(
            2,
            1,
            1.0,
            vec![0.1, 0.15, 0.7],
            vec![1.0, 0.5, -1.0, -0.5, 0.3, 0.4],
            1.0,
            1,
        )
        .unwrap();
        let cells = CellDecomposition::for_ensemble(&ens, 4).unwrap();
        let u = mean_velocity_per_cell(&ens, &cells);
        assert_eq!(u[0], vec![0.0, 0.0]);
        assert_eq!(u[1], vec![0.0, 0.0]);
        assert_eq!(u[2], vec![0.3, 0.4]);
        let m = moments(&ens, &cells, 1.0, 10);
        let mass: f64 = m.iter().map(|c| c.rho * cells.cell_volume()).sum();
        assert!((mass - 1.0).abs() < 1e-15);
    }

    #[test]
    fn linear_weights_wrap_and_sum_to_one() {
        let cells = CellDecomposition::new(2, 1.0, 4).unwrap();
        let mut w = [(0usize, 0.0f64); 8];
        assert_eq!(cells.linear_weights(&[0.375, 0.625], &mut w), 4);
        let at_center: Vec<_> = w[..4].iter().filter(|(_, x)| *x > 0.0).collect();
        assert_eq!(at_center, vec![&(1 + 2 * 4, 1.0)]);
        // below the first centre the left neighbour is the last cell
        let n = cells.linear_weights(&[0.05, 0.5], &mut w);
        assert!((w[..n].iter().map(|p| p.1).sum::<f64>() - 1.0).abs() < 1e-15);
        let left: f64 = w[..n].iter().filter(|p| p.0 % 4 == 3).map(|p| p.1).sum();
        assert!((left - 0.3).abs() < 1e-12);
    }

    #[test]
    fn linear_coupling_preserves_total_momentum() {
        let n = 300;
        let xs: Vec<f64> = (0..n).map(|i| ((i * 37) % n) as f64 / n as f64 * 3.0).collect();
        let vs: Vec<f64> = (0..n).flat_map(|i| [(0.3 * i as f64).cos(), (0.7 * i as f64).sin()]).collect();
        let ens = ParticleEnsemble::new(2, 1, 3.0, xs, vs, 1.0, 5).unwrap();
        let cells = CellDecomposition::for_ensemble(&ens, 7).unwrap();
        let u = linear_mean_velocity(&ens, &cells);
        for k in 0..2 {
            let a: f64 = u.iter().skip(k).step_by(2).sum();
            let b: f64 = ens.velocities().iter().skip(k).step_by(2).sum();
            assert!((a - b).abs() < 1e-11, "{a} {b}");
        }
    }

    #[test]
    fn reconstruction_keeps_cell_momentum() {
        let n = 400;
        let xs: Vec<f64> = (0..2 * n).map(|i| ((i * 53) % 997) as f64 / 997.0 * 2.0).collect();
        let vs: Vec<f64> = (0..n).flat_map(|i| [(0.1 * i as f64).cos(), (0.1 * i as f64).sin(), 0.5]).collect();
        let ens = ParticleEnsemble::new(3, 2, 2.0, xs, vs, 1.0, 9).unwrap();
        let cells = CellDecomposition::for_ensemble(&ens, 5).unwrap();
        let u = reconstructed_mean_velocity(&ens, &cells);
        let cell_u = mean_velocity_per_cell(&ens, &cells);
        for k in 0..cells.count() {
            let m = cells.members(k);
            for j in 0..3 {
                let s: f64 = m.iter().map(|&i| u[3 * i + j]).sum();
                assert!((s - m.len() as f64 * cell_u[k][j]).abs() < 1e-11);
            }
        }
        // a linear velocity field is reproduced away from the periodic seam
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let vs: Vec<f64> = xs.iter().flat_map(|x| [*x, 1.0]).collect();
        let ens = ParticleEnsemble::new(2, 1, 1.0, xs.clone(), vs, 1.0, 2).unwrap();
        let cells = CellDecomposition::for_ensemble(&ens, 10).unwrap();
        let u = reconstructed_mean_velocity(&ens, &cells);
        for i in 100..900 {
            assert!((u[2 * i] - xs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn rigid_translation_without_noise() {
        let p = ModelParams::new(2, 1.0, 1.0, 1e-300, 0.1).unwrap();
        let v = [0.6, 0.8];
        let n = 50;
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let vs: Vec<f64> = (0..n).flat_map(|_| v).collect();
        let mut ens = ParticleEnsemble::new(2, 1, 1.0, xs.clone(), vs, 1.0, 3).unwrap();
        let mut cells = CellDecomposition::new(1, 1.0, 8).unwrap();
        for _ in 0..10 {
            step(&mut ens, &p, 0.01, &mut cells).unwrap();
        }
        for i in 0..n {
            assert!((ens.velocity(i)[0] - 0.6).abs() < 1e-14);
            let expect = (xs[i] + 0.06).rem_euclid(1.0);
            assert!((ens.position(i)[0] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let p = params(0.2, 0.1);
        let make = || {
            let n = 200;
            let xs: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 * 2.0).collect();
            let vs: Vec<f64> = (0..n).flat_map(|i| [(i as f64).cos(), (i as f64).sin()]).collect();
            ParticleEnsemble::new(2, 1, 2.0, xs, vs, 1.0, 42).unwrap()
        };
        let (mut a, mut b) = (make(), make());
        let mut ca = CellDecomposition::new(1, 2.0, 4).unwrap();
        let mut cb = ca.clone();
        for _ in 0..5 {
            step(&mut a, &p, 0.005, &mut ca).unwrap();
            step(&mut b, &p, 0.005, &mut cb).unwrap();
        }
        assert_eq!(a.velocities(), b.velocities());
        assert_eq!(a.positions(), b.positions());
    }

    #[test]
    fn speed_spread_matches_linearized_variance() {
        let eps: f64 = 0.05;
        let p = ModelParams::new(2, 1.0, 1.0, 0.2, eps).unwrap();
        let n = 20_000;
        let vs: Vec<f64> = (0..n).flat_map(|i| {
            let t = i as f64 * 0.37;
            [t.cos(), t.sin()]
        }).collect();
        let mut ens = ParticleEnsemble::new(2, 0, 1.0, vec![], vs, 1.0, 9).unwrap();
        let mut cells = CellDecomposition::new(0, 1.0, 1).unwrap();
        let dt = eps * eps / 16.0;
        for _ in 0..200 {
            step(&mut ens, &p, dt, &mut cells).unwrap();
        }
        let mut acc = 0.0;
        let snaps = 50;
        for _ in 0..snaps {
            for _ in 0..4 {
                step(&mut ens, &p, dt, &mut cells).unwrap();
            }
            let s = ens.speeds();
            let mean = s.iter().sum::<f64>() / n as f64;
            acc += s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        }
        let var = acc / snaps as f64;
        let target = p.sigma * eps / (2.0 * p.alpha());
        assert!((var / target - 1.0).abs() < 0.2, "var {var} target {target}");
    }
}
