//! Kinetic-versus-SOH comparison as epsilon shrinks.

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64Mcg;
use rayon::prelude::*;
use serde::Serialize;

use super::config::RunConfig;
use super::output::{write_json, CsvSink, Gate, Provenance, RunSummary};
use super::presets::{bump, kronecker_pair, planar, stratified_positions, total_mass};
use crate::error::{Error, Result};
use crate::kinetic::{derive_seed, moments, step_with, CellDecomposition, ParticleEnsemble, StepScheme};
use crate::soh::{soh_run, SohCoefficients, SohState};
use crate::vecops::dot;
use crate::vmf::CosineSampler;

/// Cell densities and orientations on the comparison grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MacroProfile {
    pub centers: Vec<f64>,
    pub rho: Vec<f64>,
    pub omega: Vec<Vec<f64>>,
    /// Cells whose orientation is meaningful.
    pub included: Vec<bool>,
}

impl MacroProfile {
    pub fn from_soh(state: &SohState) -> Self {
        let n = state.cell_count();
        MacroProfile {
            centers: (0..n).map(|k| state.center(k)[0]).collect(),
            rho: state.rho().to_vec(),
            omega: (0..n).map(|k| state.omega(k).to_vec()).collect(),
            included: vec![true; n],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentErrors {
    pub l1_rho: f64,
    pub linf_rho: f64,
    /// Mass-weighted mean of arccos(Omega_a . Omega_b) over included cells.
    pub angular: f64,
    pub excluded_fraction: f64,
}

/// arccos(a . b) for unit vectors, in a form that stays accurate near 0.
fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x + y).powi(2)).sum::<f64>().sqrt();
    2.0 * diff.atan2(sum)
}

/// Errors of `a` against the reference `b` on cells of width `h`.
pub fn moment_errors(a: &MacroProfile, b: &MacroProfile, h: f64) -> Result<MomentErrors> {
    if a.rho.len() != b.rho.len() {
        return Err(Error::Precondition("profiles live on different grids".into()));
    }
    let mut l1 = 0.0;
    let mut linf: f64 = 0.0;
    let mut ang = 0.0;
    let mut mass = 0.0;
    let mut excluded = 0;
    for k in 0..a.rho.len() {
        let e = (a.rho[k] - b.rho[k]).abs();
        l1 += e * h;
        linf = linf.max(e);
        if a.included[k] && b.included[k] {
            ang += a.rho[k] * angle_between(&a.omega[k], &b.omega[k]);
            mass += a.rho[k];
        } else {
            excluded += 1;
        }
    }
    Ok(MomentErrors {
        l1_rho: l1,
        linf_rho: linf,
        angular: if mass > 0.0 { ang / mass } else { 0.0 },
        excluded_fraction: excluded as f64 / a.rho.len() as f64,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorRow {
    pub epsilon: f64,
    pub particles: usize,
    pub dt: f64,
    pub steps: usize,
    #[serde(flatten)]
    pub errors: MomentErrors,
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioRow {
    pub eps_from: f64,
    pub eps_to: f64,
    pub l1_ratio: f64,
    pub linf_ratio: f64,
    pub angular_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseControl {
    pub epsilon: f64,
    pub particles: usize,
    pub l1_change: f64,
    pub angular_change: f64,
    pub min_l1_gap: f64,
    pub min_angular_gap: f64,
    pub below_gap: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub l_star: f64,
    pub k_d: f64,
    pub c1: f64,
    pub t_final: f64,
    pub cells: usize,
    pub soh_cells: usize,
    /// Sorted by epsilon, largest first.
    pub rows: Vec<ErrorRow>,
    pub ratios: Vec<RatioRow>,
    pub monotone_l1: bool,
    pub monotone_linf: bool,
    pub monotone_angular: bool,
    pub noise: Option<NoiseControl>,
    #[serde(skip)]
    pub soh_profile: MacroProfile,
    #[serde(skip)]
    pub kinetic_profiles: Vec<MacroProfile>,
}

impl ComparisonReport {
    pub fn gates(&self) -> Vec<Gate> {
        let mut g = vec![
            Gate::flag("l1_rho_strictly_decreasing", self.monotone_l1),
            Gate::flag("angular_strictly_decreasing", self.monotone_angular),
        ];
        if let Some(n) = &self.noise {
            g.push(Gate::flag("noise_floor_below_epsilon_gap", n.below_gap));
        }
        g
    }
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// Kinetic run at one epsilon from VMF(l*, Omega(0, x)) velocities.
pub fn kinetic_profile(
    cfg: &RunConfig,
    coeffs: &SohCoefficients,
    eps: f64,
    particles: usize,
    seed: u64,
) -> Result<(MacroProfile, f64, usize)> {
    let m = &cfg.model;
    let disc = &cfg.discretization;
    let params = m.params(eps)?;
    let length = disc.length;
    let init = &cfg.initial;
    let rho = |x: f64| bump(init, length, x).0;
    let mass = total_mass(rho, length);
    let mut rng = Pcg64Mcg::seed_from_u64(derive_seed(seed, 0));
    let positions = stratified_positions(rho, length, particles, &mut rng);
    let sampler = CosineSampler::new(coeffs.l, m.d)?;
    // Quasi-random velocity quantiles paired with the sorted positions, so
    // every cell starts with a well-resolved mean velocity.
    let shift = (rng.random::<f64>(), rng.random::<f64>());
    let mut velocities = Vec::with_capacity(particles * m.d);
    for (i, &x) in positions.iter().enumerate() {
        let axis = planar(m.d, bump(init, length, x).1);
        let v = if m.d <= 3 {
            let (u, w) = kronecker_pair(i, shift);
            sampler.direction_from_uniforms(u, w, &axis, m.r)?
        } else {
            sampler.sample(&mut rng, &axis, m.r)
        };
        velocities.extend(v);
    }
    let mut ens = ParticleEnsemble::new(m.d, 1, length, positions, velocities, mass, derive_seed(seed, 1))?;
    let refine = cfg.kinetic_refinement(eps);
    let mut cells = CellDecomposition::for_ensemble(&ens, disc.cells * refine)?;
    let (dt, steps) = cfg.kinetic_dt(eps);
    let scheme = StepScheme { noise: disc.noise, coupling: disc.coupling };
    for _ in 0..steps {
        step_with(&mut ens, &params, dt, &mut cells, scheme)?;
    }
    cells.assign(&ens);
    let mom = moments(&ens, &cells, m.r, 1);
    // Average the refined cells back onto the comparison grid: density by
    // mean, velocity by momentum.
    let threshold = 0.1 * coeffs.c1();
    let coarse = CellDecomposition::new(1, length, disc.cells)?;
    let mut profile = MacroProfile {
        centers: (0..disc.cells).map(|k| coarse.center(k)[0]).collect(),
        rho: Vec::with_capacity(disc.cells),
        omega: Vec::with_capacity(disc.cells),
        included: Vec::with_capacity(disc.cells),
    };
    for block in mom.chunks(refine) {
        let rho = block.iter().map(|c| c.rho).sum::<f64>();
        let mut u = vec![0.0; m.d];
        for c in block {
            for (a, b) in u.iter_mut().zip(&c.u) {
                *a += c.rho * b;
            }
        }
        if rho > 0.0 {
            u.iter_mut().for_each(|a| *a /= rho);
        }
        let speed = dot(&u, &u).sqrt();
        profile.rho.push(rho / refine as f64);
        profile.included.push(speed > threshold);
        profile.omega.push(if speed > 1e-14 { u.iter().map(|a| a / speed).collect() } else { vec![0.0; m.d] });
    }
    Ok((profile, dt, steps))
}

/// SOH solution at t_final averaged onto the comparison grid.
pub fn soh_profile(cfg: &RunConfig, coeffs: &SohCoefficients) -> Result<MacroProfile> {
    let disc = &cfg.discretization;
    let length = disc.length;
    let d = cfg.model.d;
    let s0 = SohState::from_fn(*coeffs, 1, disc.soh_cells, length, |x| {
        let (r, a) = bump(&cfg.initial, length, x[0]);
        (r, planar(d, a))
    })?;
    let s1 = soh_run(&s0, disc.t_final, disc.cfl)?;
    Ok(MacroProfile::from_soh(&s1.coarsen(disc.soh_cells / disc.cells)?))
}

pub fn run_compare(cfg: &RunConfig) -> Result<ComparisonReport> {
    let disc = &cfg.discretization;
    let coeffs = SohCoefficients::from_model(&cfg.model.primary()?)?;
    let reference = soh_profile(cfg, &coeffs).map_err(|e| Error::SubRun { run: "soh".into(), source: Box::new(e) })?;
    let eps = &cfg.model.epsilons;
    let mut runs: Vec<(String, f64, usize)> =
        eps.iter().map(|&e| (format!("kinetic eps={e}"), e, disc.particles)).collect();
    let smallest = *eps.last().unwrap();
    if cfg.gates.noise_control {
        runs.push((format!("noise control eps={smallest} N={}", 2 * disc.particles), smallest, 2 * disc.particles));
    }
    let results: Vec<Result<(MacroProfile, f64, usize)>> = runs
        .par_iter()
        .enumerate()
        .map(|(i, (label, e, n))| {
            kinetic_profile(cfg, &coeffs, *e, *n, derive_seed(cfg.seed, i as u64))
                .map_err(|err| Error::SubRun { run: label.clone(), source: Box::new(err) })
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let h = disc.length / disc.cells as f64;
    let mut rows = Vec::new();
    for ((_, e, n), (prof, dt, steps)) in runs.iter().zip(&results).take(eps.len()) {
        rows.push(ErrorRow {
            epsilon: *e,
            particles: *n,
            dt: *dt,
            steps: *steps,
            errors: moment_errors(prof, &reference, h)?,
        });
    }
    let ratios = rows
        .windows(2)
        .map(|w| RatioRow {
            eps_from: w[0].epsilon,
            eps_to: w[1].epsilon,
            l1_ratio: w[0].errors.l1_rho / w[1].errors.l1_rho,
            linf_ratio: w[0].errors.linf_rho / w[1].errors.linf_rho,
            angular_ratio: w[0].errors.angular / w[1].errors.angular,
        })
        .collect();
    let col = |f: fn(&MomentErrors) -> f64| rows.iter().map(|r| f(&r.errors)).collect::<Vec<f64>>();
    let l1 = col(|e| e.l1_rho);
    let ang = col(|e| e.angular);
    let noise = if cfg.gates.noise_control {
        let control = moment_errors(&results[eps.len()].0, &reference, h)?;
        let last = rows.last().unwrap().errors;
        let gap = |v: &[f64]| v.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
        let (l1_change, angular_change) = ((control.l1_rho - last.l1_rho).abs(), (control.angular - last.angular).abs());
        let (min_l1_gap, min_angular_gap) = (gap(&l1), gap(&ang));
        Some(NoiseControl {
            epsilon: smallest,
            particles: 2 * disc.particles,
            l1_change,
            angular_change,
            min_l1_gap,
            min_angular_gap,
            below_gap: l1_change < min_l1_gap && angular_change < min_angular_gap,
        })
    } else {
        None
    };
    Ok(ComparisonReport {
        l_star: coeffs.l,
        k_d: coeffs.kd,
        c1: coeffs.c1(),
        t_final: disc.t_final,
        cells: disc.cells,
        soh_cells: disc.soh_cells,
        monotone_l1: strictly_decreasing(&l1),
        monotone_linf: strictly_decreasing(&col(|e| e.linf_rho)),
        monotone_angular: strictly_decreasing(&ang),
        rows,
        ratios,
        noise,
        soh_profile: reference,
        kinetic_profiles: results.into_iter().take(eps.len()).map(|r| r.0).collect(),
    })
}

fn angle(w: &[f64]) -> f64 {
    w[1].atan2(w[0])
}

/// Writes report.json and compare_profiles.csv.
pub fn write_compare(cfg: &RunConfig, report: &ComparisonReport) -> Result<RunSummary> {
    let prov = Provenance::new(cfg);
    let mut files = vec![write_json(&cfg.output, "report.json", &prov, report)?];
    let mut csv = CsvSink::create(
        &cfg.output,
        "compare_profiles.csv",
        &prov,
        &["epsilon", "x", "rho_kinetic", "rho_soh", "angle_kinetic", "angle_soh", "included"],
    )?;
    let s = &report.soh_profile;
    for (row, k) in report.rows.iter().zip(&report.kinetic_profiles) {
        for c in 0..s.rho.len() {
            csv.row(&[
                row.epsilon,
                s.centers[c],
                k.rho[c],
                s.rho[c],
                angle(&k.omega[c]),
                angle(&s.omega[c]),
                k.included[c] as u8 as f64,
            ])?;
        }
    }
    files.push(csv.finish()?);
    Ok(RunSummary { scenario: "compare".into(), gates: report.gates(), files })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soh_against_itself_is_exact() {
        let cfg = super::super::config::parse_config_str(
            r#"{"scenario":"compare","model":{"d":2,"r":1,"sigma":0.2,"epsilons":[0.2,0.1]},
                "discretization":{"particles":10,"t_final":0.1,"soh_cells":64}}"#,
        )
        .unwrap();
        let coeffs = SohCoefficients::from_model(&cfg.model.primary().unwrap()).unwrap();
        let a = soh_profile(&cfg, &coeffs).unwrap();
        let b = soh_profile(&cfg, &coeffs).unwrap();
        let e = moment_errors(&a, &b, 0.125).unwrap();
        assert_eq!((e.l1_rho, e.linf_rho, e.angular, e.excluded_fraction), (0.0, 0.0, 0.0, 0.0));
    }
}
