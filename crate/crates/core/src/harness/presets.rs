//! Initial data shared by the kinetic, SOH and comparison runs.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::config::InitialCondition;
use crate::error::Result;
use crate::vecops::{normalized, unit};
use crate::vmf::CosineSampler;

/// Density and orientation angle of the gaussian-bump preset at x.
pub fn bump(init: &InitialCondition, length: f64, x: f64) -> (f64, f64) {
    match init {
        InitialCondition::GaussianBump { background, amplitude, width, angle_amplitude } => {
            let z = (x - 0.5 * length) / width;
            (
                background + amplitude * (-0.5 * z * z).exp(),
                angle_amplitude * (2.0 * PI * x / length).sin(),
            )
        }
        _ => (1.0, 0.0),
    }
}

/// Unit vector at `angle` in the plane of the first two axes of R^d.
pub fn planar(d: usize, angle: f64) -> Vec<f64> {
    let mut w = vec![0.0; d];
    w[0] = angle.cos();
    w[1] = angle.sin();
    w
}

/// Axis of a vmf preset, defaulting to the first unit vector.
pub fn preset_axis(init: &InitialCondition, d: usize) -> Vec<f64> {
    match init {
        InitialCondition::Vmf { omega: Some(w), .. } => normalized(w),
        _ => unit(d, 0),
    }
}

/// Stratified samples of the density `rho` on [0, length): one uniform
/// draw per quantile slab, mapped through a tabulated inverse CDF.
pub fn stratified_positions<F: Fn(f64) -> f64, R: Rng>(rho: F, length: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let m = 8192;
    let h = length / m as f64;
    let mut cdf = vec![0.0; m + 1];
    for j in 0..m {
        cdf[j + 1] = cdf[j] + rho((j as f64 + 0.5) * h) * h;
    }
    let total = cdf[m];
    (0..n)
        .map(|i| {
            let target = (i as f64 + rng.random::<f64>()) / n as f64 * total;
            let j = cdf.partition_point(|c| *c <= target).clamp(1, m) - 1;
            let frac = (target - cdf[j]) / (cdf[j + 1] - cdf[j]);
            ((j as f64 + frac) * h).min(length * (1.0 - f64::EPSILON))
        })
        .collect()
}

/// Point i of the randomly shifted two-dimensional Kronecker sequence with
/// the plastic-number generator; contiguous index blocks are well spread.
pub fn kronecker_pair(i: usize, shift: (f64, f64)) -> (f64, f64) {
    const G: f64 = 1.324_717_957_244_746;
    let (a1, a2) = (1.0 / G, 1.0 / (G * G));
    let i = i as f64;
    ((shift.0 + i * a1).fract(), (shift.1 + i * a2).fract())
}

/// Total mass of `rho` over [0, length) by the midpoint rule.
pub fn total_mass<F: Fn(f64) -> f64>(rho: F, length: f64) -> f64 {
    let m = 8192;
    let h = length / m as f64;
    (0..m).map(|j| rho((j as f64 + 0.5) * h)).sum::<f64>() * h
}

pub fn uniform_sphere<R: Rng>(d: usize, r: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return g.iter().map(|x| r * x / n).collect();
        }
    }
}

/// Velocity on the sphere with angular density proportional to
/// 1 + bias (w . e_1) / r, by rejection from the uniform law.
pub fn biased_velocity<R: Rng>(d: usize, r: f64, bias: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let v = uniform_sphere(d, r, rng);
        if rng.random::<f64>() * (1.0 + bias.abs()) <= 1.0 + bias * v[0] / r {
            return v;
        }
    }
}

/// Draws `n` velocities for the homogeneous presets.
pub fn preset_velocities<R: Rng>(
    init: &InitialCondition,
    d: usize,
    r: f64,
    l_star: f64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n * d);
    match init {
        InitialCondition::Vmf { l, .. } => {
            let sampler = CosineSampler::new(l.unwrap_or(l_star), d)?;
            let axis = preset_axis(init, d);
            for _ in 0..n {
                out.extend(sampler.sample(rng, &axis, r));
            }
        }
        InitialCondition::BiasedAngular { bias } => {
            for _ in 0..n {
                out.extend(biased_velocity(d, r, *bias, rng));
            }
        }
        _ => {
            for _ in 0..n {
                out.extend(uniform_sphere(d, r, rng));
            }
        }
    }
    Ok(out)
}
