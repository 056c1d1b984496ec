//! The velocity-average operator: radial projection of velocity samples
//! onto the sphere of radius r, keeping the mass sitting at v = 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd;
use crate::vecops::{dot, norm};

/// Relative tolerance for "at the origin" and "on the sphere".
pub const SUPPORT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedVelocitySample {
    pub v: Vec<f64>,
    pub w: f64,
}

impl WeightedVelocitySample {
    pub fn new(v: Vec<f64>, w: f64) -> Self {
        WeightedVelocitySample { v, w }
    }
}

fn average_one(s: &WeightedVelocitySample, r: f64) -> WeightedVelocitySample {
    let n = norm(&s.v);
    if n <= SUPPORT_TOL * r || (n - r).abs() <= SUPPORT_TOL * r {
        return s.clone();
    }
    WeightedVelocitySample {
        v: s.v.iter().map(|x| r * x / n).collect(),
        w: s.w,
    }
}

/// Moves every nonzero velocity radially onto the sphere of radius r.
/// Weights are never touched. Samples already at the origin or on the
/// sphere (to `SUPPORT_TOL`) are returned unchanged.
pub fn average_samples(samples: &[WeightedVelocitySample], r: f64) -> Vec<WeightedVelocitySample> {
    samples.iter().map(|s| average_one(s, r)).collect()
}

/// True when averaging reproduces the input bit for bit. Errors if some
/// sample is neither at the origin nor on the sphere.
pub fn check_idempotence(samples: &[WeightedVelocitySample], r: f64) -> Result<bool> {
    for (i, s) in samples.iter().enumerate() {
        let n = norm(&s.v);
        if !(n <= SUPPORT_TOL * r || (n - r).abs() <= SUPPORT_TOL * r) {
            return Err(Error::Precondition(format!(
                "sample {i} has |v| = {n}, outside {{0}} and the sphere of radius {r}"
            )));
        }
    }
    let out = average_samples(samples, r);
    Ok(out.iter().zip(samples).all(|(a, b)| {
        a.w.to_bits() == b.w.to_bits()
            && a.v.len() == b.v.len()
            && a.v.iter().zip(&b.v).all(|(x, y)| x.to_bits() == y.to_bits())
    }))
}

/// Max over test functions of |sum w (alpha - beta |v|^2) v . grad psi(v)|,
/// where psi(v) = psi_tilde(r v/|v|) is the radially constant extension.
pub fn check_elimination(
    samples: &[WeightedVelocitySample],
    r: f64,
    beta: f64,
    test_functions: &[&dyn Fn(&[f64]) -> f64],
) -> f64 {
    let alpha = beta * r * r;
    test_functions
        .iter()
        .map(|psi_tilde| {
            let ext = |v: &[f64]| {
                let n = norm(v);
                let w: Vec<f64> = v.iter().map(|x| r * x / n).collect();
                psi_tilde(&w)
            };
            samples
                .iter()
                .filter_map(|s| {
                    let n = norm(&s.v);
                    if n <= SUPPORT_TOL * r {
                        return None;
                    }
                    let g = fd::gradient(&ext, &s.v, fd::ambient_step(n));
                    Some(s.w * (alpha - beta * n * n) * dot(&s.v, &g))
                })
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max)
}
