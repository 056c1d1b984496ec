//! Numerical checks of the sphere integration-by-parts identities and of
//! the relations between ambient derivatives of radially constant
//! extensions and intrinsic surface derivatives.

use serde::Serialize;

use super::SphereGrid;
use crate::error::{Error, Result};
use crate::fd;
use crate::vecops::{dot, norm, orthonormal_complement, scaled};

#[derive(Debug, Clone, Serialize)]
pub struct IdentityRow {
    pub t: f64,
    /// Integral of div A over the sphere of radius t.
    pub div_integral: f64,
    /// Right side of the normal-part identity for the same integral.
    pub normal_part_rhs: f64,
    /// Whether A . v = 0 held numerically on the grid.
    pub tangential: bool,
    /// Integral of div A, reported only for tangential fields.
    pub tangential_div_integral: Option<f64>,
    /// Integral of grad(chi) . A + chi div A, only for tangential fields.
    pub tangential_pairing: Option<f64>,
    /// Max error between the ambient gradient of the extension and the
    /// rescaled intrinsic gradient.
    pub ext_gradient: f64,
    /// Max |grad psi . v| / |grad psi|-scale: the extension's gradient is tangent.
    pub ext_normal: f64,
    /// Max error between ambient and rescaled intrinsic divergence.
    pub ext_divergence: f64,
}

impl IdentityRow {
    pub fn normal_part_residual(&self) -> f64 {
        (self.div_integral - self.normal_part_rhs).abs()
    }

    pub fn max_residual(&self) -> f64 {
        [
            self.normal_part_residual(),
            self.tangential_div_integral.map_or(0.0, f64::abs),
            self.tangential_pairing.map_or(0.0, f64::abs),
            self.ext_gradient,
            self.ext_normal,
            self.ext_divergence,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub rows: Vec<IdentityRow>,
    pub step: f64,
}

impl IdentityReport {
    pub fn max_residual(&self) -> f64 {
        self.rows.iter().map(IdentityRow::max_residual).fold(0.0, f64::max)
    }
}

/// Derivative at s = 0 of `f` along the great circle through `omega`
/// (radius `rad`) with unit tangent `e`.
fn geodesic_derivative<F, T>(f: &F, omega: &[f64], e: &[f64], rad: f64, h: f64) -> T
where
    F: Fn(&[f64]) -> T,
    T: Derivable,
{
    let at = |s: f64| {
        let (sn, cs) = (s / rad).sin_cos();
        let p: Vec<f64> = omega
            .iter()
            .zip(e)
            .map(|(o, e)| o * cs + rad * e * sn)
            .collect();
        f(&p)
    };
    T::combine(at(h), at(-h), at(2.0 * h), at(-2.0 * h), h)
}

trait Derivable {
    fn combine(p1: Self, m1: Self, p2: Self, m2: Self, h: f64) -> Self;
}

impl Derivable for f64 {
    fn combine(p1: f64, m1: f64, p2: f64, m2: f64, h: f64) -> f64 {
        (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h)
    }
}

impl Derivable for Vec<f64> {
    fn combine(p1: Self, m1: Self, p2: Self, m2: Self, h: f64) -> Self {
        (0..p1.len())
            .map(|i| f64::combine(p1[i], m1[i], p2[i], m2[i], h))
            .collect()
    }
}

fn project(omega: &[f64], v: &[f64]) -> Vec<f64> {
    let s = dot(omega, v) / dot(omega, omega);
    v.iter().zip(omega).map(|(v, o)| v - s * o).collect()
}

fn tangent_basis(omega: &[f64]) -> Vec<Vec<f64>> {
    orthonormal_complement(&scaled(omega, 1.0 / norm(omega)))
}

/// Intrinsic surface gradient of `f` on the sphere through `omega`.
fn surface_gradient<F: Fn(&[f64]) -> f64>(f: &F, omega: &[f64], h: f64) -> Vec<f64> {
    let rad = norm(omega);
    let mut g = vec![0.0; omega.len()];
    for e in tangent_basis(omega) {
        let de: f64 = geodesic_derivative(f, omega, &e, rad, h);
        for (gi, ei) in g.iter_mut().zip(&e) {
            *gi += de * ei;
        }
    }
    g
}

/// Intrinsic divergence of a tangent field on the sphere through `omega`.
fn surface_divergence<F: Fn(&[f64]) -> Vec<f64>>(xi: &F, omega: &[f64], h: f64) -> f64 {
    let rad = norm(omega);
    tangent_basis(omega)
        .iter()
        .map(|e| {
            let dx: Vec<f64> = geodesic_derivative(xi, omega, e, rad, h);
            dot(e, &dx)
        })
        .sum()
}

/// Checks the sphere integration-by-parts identities for the vector field
/// `field` and scalar `chi` on spheres of radius `t` for each entry of
/// `t_values`, all of which must lie in `annulus` at least two FD steps
/// away from its edges.
///
/// The extension checks use `chi` restricted to the grid's sphere as the
/// scalar and the tangential part of `field` there as the tangent field.
pub fn verify_sphere_identities<A, C>(
    field: A,
    chi: C,
    grid: &SphereGrid,
    annulus: (f64, f64),
    t_values: &[f64],
) -> Result<IdentityReport>
where
    A: Fn(&[f64]) -> Vec<f64>,
    C: Fn(&[f64]) -> f64,
{
    let r = grid.radius();
    let d = grid.dimension();
    let h = fd::ambient_step(r);
    let (inner, outer) = annulus;
    for &t in t_values.iter().chain(std::iter::once(&r)) {
        if !(t - 2.0 * h > inner && t + 2.0 * h < outer) {
            return Err(Error::OutsideAnnulus { t, inner, outer });
        }
    }

    let on_r = |v: &[f64]| scaled(v, r / norm(v));
    let psi_ext = |v: &[f64]| chi(&on_r(v));
    let xi_tilde = |w: &[f64]| project(w, &field(w));
    let xi_ext = |v: &[f64]| xi_tilde(&on_r(v));

    let mut rows = Vec::with_capacity(t_values.len());
    for &t in t_values {
        let g = grid.scaled_to(t);
        let mut div_integral = 0.0;
        let mut normal_part_rhs = 0.0;
        let mut pairing = 0.0;
        let mut tangential = true;
        let mut ext_gradient: f64 = 0.0;
        let mut ext_normal: f64 = 0.0;
        let mut ext_divergence: f64 = 0.0;
        for (w, wt) in g.iter() {
            let a = field(w);
            let jac = fd::jacobian(&field, w, h);
            let div: f64 = (0..d).map(|k| jac[k][k]).sum();
            let mut normal = 0.0;
            for i in 0..d {
                for k in 0..d {
                    normal += w[i] * w[k] * jac[i][k];
                }
            }
            let aw = dot(&a, w);
            if aw.abs() > 1e-12 * norm(&a).max(1.0) * t {
                tangential = false;
            }
            div_integral += wt * div;
            normal_part_rhs += wt * (normal + (d as f64 - 1.0) * aw) / (t * t);
            pairing += wt * (dot(&fd::gradient(&chi, w, h), &a) + chi(w) * div);

            let ambient = fd::gradient(&psi_ext, w, h);
            let back = scaled(w, r / t);
            let intrinsic = scaled(&surface_gradient(&chi, &back, h), r / t);
            for (x, y) in ambient.iter().zip(&intrinsic) {
                ext_gradient = ext_gradient.max((x - y).abs());
            }
            ext_normal = ext_normal.max(dot(&ambient, w).abs() / t);

            let amb_div = fd::divergence(&xi_ext, w, h);
            let int_div = r / t * surface_divergence(&xi_tilde, &back, h);
            ext_divergence = ext_divergence.max((amb_div - int_div).abs());
        }
        rows.push(IdentityRow {
            t,
            div_integral,
            normal_part_rhs,
            tangential,
            tangential_div_integral: tangential.then_some(div_integral),
            tangential_pairing: tangential.then_some(pairing),
            ext_gradient,
            ext_normal,
            ext_divergence,
        });
    }
    Ok(IdentityReport { rows, step: h })
}
