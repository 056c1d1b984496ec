//! Quadrature on the polar-angle interval and on spheres of radius r.

mod identities;

pub use identities::{verify_sphere_identities, IdentityReport, IdentityRow};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::vecops::{norm, normalized, orthonormal_complement, unit, unit_sphere_area};

/// Gauss-type rule in c = cos(theta) for the weight (1 - c^2)^((d-3)/2).
///
/// `integrate(g)` approximates the integral of `g(cos theta) sin^(d-2) theta`
/// over `[0, pi]`, exactly for polynomials of degree up to `degree()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaRule {
    dimension: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl ThetaRule {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Highest polynomial degree integrated exactly.
    pub fn degree(&self) -> usize {
        2 * self.nodes.len() - 1
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut g: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&c, &w)| w * g(c))
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Integral of (1 - c^2)^((d-3)/2) over (-1, 1).
pub(crate) fn weight_mass(d: usize) -> f64 {
    let (mut mass, mut a2) = if d % 2 == 0 { (PI, -1i64) } else { (2.0, 0i64) };
    // a2 = 2a with a = (d-3)/2; step a -> a+1
    while a2 < d as i64 - 3 {
        let a = a2 as f64 / 2.0;
        mass *= (2.0 * a + 2.0) / (2.0 * a + 3.0);
        a2 += 2;
    }
    mass
}

pub fn theta_rule(d: usize, n: usize) -> Result<ThetaRule> {
    if d < 2 {
        return Err(Error::UnsupportedDimension(d));
    }
    if n < 2 {
        return Err(Error::param("n", format!("need at least 2 nodes, got {n}")));
    }
    let (nodes, weights) = if d == 2 {
        chebyshev(n)
    } else {
        gegenbauer(d, n)
    };
    Ok(ThetaRule {
        dimension: d,
        nodes,
        weights,
    })
}

/// Shared, lazily built rules keyed by (d, n).
pub fn cached_theta_rule(d: usize, n: usize) -> Result<Arc<ThetaRule>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<ThetaRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().unwrap().get(&(d, n)) {
        return Ok(rule.clone());
    }
    let rule = Arc::new(theta_rule(d, n)?);
    cache.lock().unwrap().insert((d, n), rule.clone());
    Ok(rule)
}

fn chebyshev(n: usize) -> (Vec<f64>, Vec<f64>) {
    let nodes = (0..n)
        .map(|i| ((2 * (n - i) - 1) as f64 * PI / (2 * n) as f64).cos())
        .collect();
    (nodes, vec![PI / n as f64; n])
}

fn gegenbauer(d: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let lam = (d as f64 - 2.0) / 2.0;
    let b: Vec<f64> = (0..=n)
        .map(|k| {
            if k == 0 {
                return 0.0;
            }
            let k = k as f64;
            (k * (k + 2.0 * lam - 1.0) / (4.0 * (k + lam) * (k + lam - 1.0))).sqrt()
        })
        .collect();
    let q0 = 1.0 / weight_mass(d).sqrt();

    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        jacobi[(k - 1, k)] = b[k];
        jacobi[(k, k - 1)] = b[k];
    }
    let mut x: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    x.sort_by(|a, b| a.total_cmp(b));

    // q_n, q_n' and sum_{k<n} q_k^2 from the orthonormal three-term recurrence
    let eval = |x: f64| {
        let (mut qm, mut q) = (0.0, q0);
        let (mut dqm, mut dq) = (0.0, 0.0);
        let mut sum = 0.0;
        for k in 0..n {
            sum += q * q;
            let qn = (x * q - b[k] * qm) / b[k + 1];
            let dqn = (q + x * dq - b[k] * dqm) / b[k + 1];
            qm = q;
            q = qn;
            dqm = dq;
            dq = dqn;
        }
        (q, dq, sum)
    };

    let mut w = vec![0.0; n];
    for (xi, wi) in x.iter_mut().zip(w.iter_mut()) {
        for _ in 0..4 {
            let (q, dq, _) = eval(*xi);
            let step = q / dq;
            *xi -= step;
            if step.abs() < 1e-17 {
                break;
            }
        }
        *wi = 1.0 / eval(*xi).2;
    }
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let xs = 0.5 * (x[j] - x[i]);
        let ws = 0.5 * (w[i] + w[j]);
        x[i] = -xs;
        x[j] = xs;
        w[i] = ws;
        w[j] = ws;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Quadrature grid on the sphere of radius r in dimension 2 or 3.
///
/// For d = 2 the nodes are equally spaced in angle (trapezoidal rule). For
/// d = 3 they form a Gauss-in-c times uniform-in-azimuth product grid, with c
/// measured along `axis`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SphereGrid {
    dimension: usize,
    radius: f64,
    axis: Vec<f64>,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    bandwidth: usize,
}

pub fn sphere_grid(d: usize, r: f64, resolution: usize) -> Result<SphereGrid> {
    sphere_grid_about(d, r, resolution, &unit(d.max(1), 0), 0.0)
}

/// Grid whose polar axis (d = 3) or angle origin (d = 2) is `axis`, with
/// azimuthal nodes shifted by `offset` spacings.
pub fn sphere_grid_about(
    d: usize,
    r: f64,
    resolution: usize,
    axis: &[f64],
    offset: f64,
) -> Result<SphereGrid> {
    if !(d == 2 || d == 3) {
        return Err(Error::UnsupportedDimension(d));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::param("r", format!("radius must be positive, got {r}")));
    }
    if resolution < 2 {
        return Err(Error::param("resolution", "need at least 2"));
    }
    if axis.len() != d || !(norm(axis) > 0.0) {
        return Err(Error::param("axis", "must be a nonzero vector in R^d"));
    }
    let axis = normalized(axis);
    let perp = orthonormal_complement(&axis);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let bandwidth;
    if d == 2 {
        let m = resolution;
        let e = &perp[0];
        for j in 0..m {
            let th = 2.0 * PI * (j as f64 + offset) / m as f64;
            let (s, c) = th.sin_cos();
            points.push(vec![
                r * (c * axis[0] + s * e[0]),
                r * (c * axis[1] + s * e[1]),
            ]);
        }
        weights = vec![2.0 * PI * r / m as f64; m];
        bandwidth = m - 1;
    } else {
        let rule = theta_rule(3, resolution)?;
        let m = 2 * resolution;
        for (c, wc) in rule.iter() {
            let s = (1.0 - c * c).sqrt();
            for j in 0..m {
                let ph = 2.0 * PI * (j as f64 + offset) / m as f64;
                let (sp, cp) = ph.sin_cos();
                points.push(
                    (0..3)
                        .map(|k| r * (c * axis[k] + s * (cp * perp[0][k] + sp * perp[1][k])))
                        .collect(),
                );
                weights.push(r * r * wc * 2.0 * PI / m as f64);
            }
        }
        bandwidth = 2 * resolution - 1;
    }
    Ok(SphereGrid {
        dimension: d,
        radius: r,
        axis,
        points,
        weights,
        bandwidth,
    })
}

impl SphereGrid {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest harmonic degree (d = 3) or Fourier mode (d = 2) integrated exactly.
    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points
            .iter()
            .map(|p| p.as_slice())
            .zip(self.weights.iter().copied())
    }

    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        self.iter().map(|(p, w)| w * f(p)).sum()
    }

    pub fn integrate_vector<F: FnMut(&[f64]) -> Vec<f64>>(&self, mut f: F) -> Vec<f64> {
        let mut acc = vec![0.0; self.dimension];
        for (p, w) in self.iter() {
            for (a, v) in acc.iter_mut().zip(f(p)) {
                *a += w * v;
            }
        }
        acc
    }

    /// The same angular design on the sphere of radius `t`.
    pub fn scaled_to(&self, t: f64) -> SphereGrid {
        let k = t / self.radius;
        let wk = k.powi(self.dimension as i32 - 1);
        SphereGrid {
            dimension: self.dimension,
            radius: t,
            axis: self.axis.clone(),
            points: self
                .points
                .iter()
                .map(|p| p.iter().map(|x| x * k).collect())
                .collect(),
            weights: self.weights.iter().map(|w| w * wk).collect(),
            bandwidth: self.bandwidth,
        }
    }

    pub fn area(&self) -> f64 {
        unit_sphere_area(self.dimension) * self.radius.powi(self.dimension as i32 - 1)
    }
}
