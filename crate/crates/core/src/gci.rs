//! Generalized collision invariants: the chi boundary-value problem, the
//! invariants psi_W built from it, their defining equation on the sphere,
//! and the convection coefficient k_d.
//!
//! The profile is written chi(c) = sqrt(1 - c^2) q(c) with q a polynomial.
//! This matches the square-root decay of chi at both poles, so the Galerkin
//! expansion converges geometrically in every dimension.

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fd;
use crate::spherequad::{cached_theta_rule, SphereGrid, ThetaRule};
use crate::vecops::{dot, norm, orthonormal_complement};
use crate::vmf::{solve_concentration, ModelParams, VmfLaw};

/// Extra basis functions kept past the trial space for the weak residual.
const HELD_OUT: usize = 4;

/// Maximum Galerkin resolution tried by [`solve_chi_converged`].
pub const MAX_RESOLUTION: usize = 256;

/// A scalar profile chi on [-1, 1] together with the model constants it
/// belongs to.
pub trait ChiProfile {
    fn dimension(&self) -> usize;
    fn concentration(&self) -> f64;
    fn sigma(&self) -> f64;
    fn radius(&self) -> f64;

    /// q(c) = chi(c) / sqrt(1 - c^2), bounded on [-1, 1].
    fn q(&self, c: f64) -> f64;

    fn dq(&self, c: f64) -> f64 {
        let h = 1e-4;
        let f = |x: f64| self.q(x.clamp(-1.0, 1.0));
        let c = c.clamp(-1.0 + 2.0 * h, 1.0 - 2.0 * h);
        (8.0 * (f(c + h) - f(c - h)) - (f(c + 2.0 * h) - f(c - 2.0 * h))) / (12.0 * h)
    }

    fn chi(&self, c: f64) -> f64 {
        self.q(c) * (1.0 - c * c).max(0.0).sqrt()
    }

    /// chi'(c), unbounded at the poles.
    fn dchi(&self, c: f64) -> f64 {
        let s = (1.0 - c * c).sqrt();
        self.dq(c) * s - self.q(c) * c / s
    }

    /// psi_W(w) = chi(c) (w . W) / sqrt(r^2 - (Omega . w)^2), c = Omega . w / r.
    fn psi(&self, w: &[f64], wdir: &[f64], omega: &[f64]) -> f64 {
        let r = self.radius();
        self.q(dot(omega, w) / r) * dot(w, wdir) / r
    }

    /// Surface gradient of psi_W at w.
    fn grad_psi(&self, w: &[f64], wdir: &[f64], omega: &[f64]) -> Vec<f64> {
        let r = self.radius();
        let c = dot(omega, w) / r;
        let (q, dq) = (self.q(c), self.dq(c));
        let we = dot(w, wdir);
        let amb: Vec<f64> = omega
            .iter()
            .zip(wdir)
            .map(|(o, e)| dq * we * o / (r * r) + q * e / r)
            .collect();
        let p = dot(&amb, w) / (r * r);
        amb.iter().zip(w).map(|(a, x)| a - p * x).collect()
    }
}

/// Orthonormal polynomials from a three-term recurrence.
#[derive(Debug, Clone, Serialize)]
struct OrthoBasis {
    p0: f64,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl OrthoBasis {
    /// Discrete Stieltjes procedure for the measure sum_i weights[i] delta(nodes[i]).
    fn stieltjes(nodes: &[f64], weights: &[f64], count: usize) -> Self {
        let mass: f64 = weights.iter().sum();
        let p0 = 1.0 / mass.sqrt();
        let mut prev = vec![0.0; nodes.len()];
        let mut cur = vec![p0; nodes.len()];
        let mut a = Vec::with_capacity(count);
        let mut b = vec![0.0];
        for k in 0..count {
            let ak: f64 = (0..nodes.len())
                .map(|i| weights[i] * nodes[i] * cur[i] * cur[i])
                .sum();
            let next: Vec<f64> = (0..nodes.len())
                .map(|i| (nodes[i] - ak) * cur[i] - b[k] * prev[i])
                .collect();
            let bk: f64 = next
                .iter()
                .zip(weights)
                .map(|(t, w)| w * t * t)
                .sum::<f64>()
                .sqrt();
            a.push(ak);
            b.push(bk);
            prev = cur;
            cur = next.iter().map(|t| t / bk).collect();
        }
        OrthoBasis { p0, a, b }
    }

    /// Values and derivatives of p_0..p_{n-1} at c.
    fn eval(&self, c: f64, n: usize, vals: &mut [f64], ders: &mut [f64]) {
        let (mut pm, mut p) = (0.0, self.p0);
        let (mut dm, mut dp) = (0.0, 0.0);
        for k in 0..n {
            vals[k] = p;
            ders[k] = dp;
            let pn = ((c - self.a[k]) * p - self.b[k] * pm) / self.b[k + 1];
            let dn = (p + (c - self.a[k]) * dp - self.b[k] * dm) / self.b[k + 1];
            pm = p;
            p = pn;
            dm = dp;
            dp = dn;
        }
    }

    /// sum_k coeffs[k] p_k(c) and its derivative, by forward recurrence.
    fn series(&self, coeffs: &[f64], c: f64) -> (f64, f64) {
        let (mut pm, mut p) = (0.0, self.p0);
        let (mut dm, mut dp) = (0.0, 0.0);
        let (mut s, mut ds) = (0.0, 0.0);
        for (k, &ck) in coeffs.iter().enumerate() {
            s += ck * p;
            ds += ck * dp;
            if k + 1 == coeffs.len() {
                break;
            }
            let pn = ((c - self.a[k]) * p - self.b[k] * pm) / self.b[k + 1];
            let dn = (p + (c - self.a[k]) * dp - self.b[k] * dm) / self.b[k + 1];
            pm = p;
            p = pn;
            dm = dp;
            dp = dn;
        }
        (s, ds)
    }
}

/// Galerkin solution of the chi problem and its derived coefficient k_d.
#[derive(Debug, Clone, Serialize)]
pub struct ChiSolution {
    d: usize,
    l: f64,
    sigma: f64,
    r: f64,
    basis: OrthoBasis,
    coeffs: Vec<f64>,
    /// Stiffness (scaled by e^{-l}) over trial plus held-out functions.
    #[serde(skip)]
    stiffness: DMatrix<f64>,
    #[serde(skip)]
    load: DVector<f64>,
    kd: f64,
    j_value: f64,
    weak_residual: f64,
}

impl ChiProfile for ChiSolution {
    fn dimension(&self) -> usize {
        self.d
    }
    fn concentration(&self) -> f64 {
        self.l
    }
    fn sigma(&self) -> f64 {
        self.sigma
    }
    fn radius(&self) -> f64 {
        self.r
    }
    fn q(&self, c: f64) -> f64 {
        self.basis.series(&self.coeffs, c).0
    }
    fn dq(&self, c: f64) -> f64 {
        self.basis.series(&self.coeffs, c).1
    }
}

impl ChiSolution {
    pub fn resolution(&self) -> usize {
        self.coeffs.len()
    }

    pub fn kd(&self) -> f64 {
        self.kd
    }

    /// Value of the functional J at chi.
    pub fn j_value(&self) -> f64 {
        self.j_value
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// Largest weak-form residual against held-out basis functions,
    /// relative to the largest load entry.
    pub fn weak_residual(&self) -> f64 {
        self.weak_residual
    }

    /// J at the discrete profile with coefficients `coeffs`, from the
    /// assembled matrices.
    pub fn discrete_j(&self, coeffs: &[f64]) -> f64 {
        let n = self.coeffs.len();
        let a = DVector::from_column_slice(coeffs);
        let k = self.stiffness.view((0, 0), (n, n));
        let quad = (a.transpose() * k * &a)[0];
        let lin = a.dot(&self.load.rows(0, n));
        self.l.exp() * (0.5 * quad - lin)
    }

    /// The same discretization with other coefficients.
    pub fn with_coefficients(&self, coeffs: &[f64]) -> Result<ChiSolution> {
        if coeffs.len() != self.coeffs.len() {
            return Err(Error::param("coeffs", "length must match the resolution"));
        }
        let mut out = self.clone();
        out.coeffs = coeffs.to_vec();
        out.j_value = self.discrete_j(coeffs);
        out.kd = compute_kd(&out)?;
        Ok(out)
    }
}

fn check_inputs(d: usize, l: f64, sigma: f64, r: f64) -> Result<()> {
    if d < 2 {
        return Err(Error::UnsupportedDimension(d));
    }
    let params = ModelParams::new(d, r, 1.0, sigma, 1.0)?;
    if !params.is_subcritical() {
        return Err(Error::Supercritical(params.sigma_over_r2()));
    }
    let expected = solve_concentration(&params)?;
    if !((l - expected).abs() <= 1e-8 * expected.max(1.0)) {
        return Err(Error::ConcentrationMismatch { given: l, expected });
    }
    Ok(())
}

fn quadrature_size(n: usize, l: f64) -> usize {
    2 * n + 100 + 2 * l.ceil() as usize
}

/// Galerkin solve only, without the d = 2 cross-check.
pub fn galerkin_chi(d: usize, l: f64, sigma: f64, r: f64, resolution: usize) -> Result<ChiSolution> {
    check_inputs(d, l, sigma, r)?;
    if resolution < 1 {
        return Err(Error::param("resolution", "need at least one basis function"));
    }
    let n = resolution;
    let total = n + HELD_OUT;
    let rule = cached_theta_rule(d, quadrature_size(total, l))?;
    let weights: Vec<f64> = rule
        .iter()
        .map(|(c, w)| w * (l * (c - 1.0)).exp())
        .collect();
    let basis = OrthoBasis::stieltjes(rule.nodes(), &weights, total);

    let mut vals = vec![0.0; total];
    let mut ders = vec![0.0; total];
    let mut gmat = DMatrix::<f64>::zeros(total, total);
    let mut mmat = DMatrix::<f64>::zeros(total, total);
    let mut load = DVector::<f64>::zeros(total);
    let mut g = vec![0.0; total];
    for (&c, &w) in rule.nodes().iter().zip(&weights) {
        basis.eval(c, total, &mut vals, &mut ders);
        let s2 = 1.0 - c * c;
        for k in 0..total {
            g[k] = -c * vals[k] + s2 * ders[k];
            load[k] += r * w * vals[k] * s2;
        }
        for j in 0..total {
            for k in 0..=j {
                gmat[(j, k)] += w * g[j] * g[k];
                mmat[(j, k)] += w * vals[j] * vals[k];
            }
        }
    }
    for j in 0..total {
        for k in 0..j {
            gmat[(k, j)] = gmat[(j, k)];
            mmat[(k, j)] = mmat[(j, k)];
        }
    }
    let stiffness = (gmat + mmat * (d as f64 - 2.0)) * (sigma / (r * r));

    let a = stiffness.view((0, 0), (n, n)).into_owned();
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Galerkin("stiffness matrix is not positive definite".into()))?;
    let coeffs = chol.solve(&load.rows(0, n).into_owned());
    if coeffs.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("Galerkin coefficients"));
    }
    let held = stiffness.view((n, 0), (HELD_OUT, n)) * &coeffs - load.rows(n, HELD_OUT);
    let weak_residual = held.amax() / load.amax();

    let mut sol = ChiSolution {
        d,
        l,
        sigma,
        r,
        basis,
        coeffs: coeffs.iter().copied().collect(),
        stiffness,
        load,
        kd: f64::NAN,
        j_value: 0.0,
        weak_residual,
    };
    sol.j_value = sol.discrete_j(&sol.coeffs);
    sol.kd = compute_kd(&sol)?;
    Ok(sol)
}

/// Solves the chi problem at the given resolution. For d = 2 the result is
/// also checked against the semi-analytic solution.
pub fn solve_chi(d: usize, l: f64, sigma: f64, r: f64, resolution: usize) -> Result<ChiSolution> {
    let sol = galerkin_chi(d, l, sigma, r, resolution)?;
    if d == 2 {
        cross_validate_2d(&sol)?;
    }
    Ok(sol)
}

/// Doubles the resolution from 8 until k_d changes by at most `tol`.
pub fn solve_chi_converged(d: usize, l: f64, sigma: f64, r: f64, tol: f64) -> Result<ChiSolution> {
    let mut n = 8;
    let mut prev = galerkin_chi(d, l, sigma, r, n)?;
    while 2 * n <= MAX_RESOLUTION {
        n *= 2;
        let next = galerkin_chi(d, l, sigma, r, n)?;
        if (next.kd - prev.kd).abs() <= tol {
            if d == 2 {
                cross_validate_2d(&next)?;
            }
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Galerkin(format!(
        "k_d did not settle to {tol:e} by resolution {MAX_RESOLUTION}"
    )))
}

/// The d = 2 profile from integrating the equation in closed form once:
/// chi(cos t) = integral over [t, pi] of G(cos s) ds, with
/// G(x) = C e^{-l x} - (r^3 / (sigma l)) (1 - e^{-l (1 + x)}).
#[derive(Debug, Clone)]
pub struct SemiAnalyticChi {
    l: f64,
    sigma: f64,
    r: f64,
    c_const: f64,
    gl: Arc<ThetaRule>,
}

const SEMI_PANELS: usize = 8;

impl SemiAnalyticChi {
    pub fn new(l: f64, sigma: f64, r: f64) -> Result<Self> {
        if !(l > 0.0 && sigma > 0.0 && r > 0.0) {
            return Err(Error::param("l", "need l, sigma, r > 0"));
        }
        let k = r.powi(3) / sigma;
        let cheb = cached_theta_rule(2, 400)?;
        let num = PI - cheb.integrate(|x| (-l * (1.0 + x)).exp());
        let den = cheb.integrate(|x| (-l * x).exp());
        Ok(SemiAnalyticChi {
            l,
            sigma,
            r,
            c_const: k / l * num / den,
            gl: cached_theta_rule(3, 24)?,
        })
    }

    fn g(&self, x: f64) -> f64 {
        let k = self.r.powi(3) / self.sigma;
        self.c_const * (-self.l * x).exp() - k / self.l * (1.0 - (-self.l * (1.0 + x)).exp())
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        let h = (b - a) / SEMI_PANELS as f64;
        (0..SEMI_PANELS)
            .map(|p| {
                let m = a + (p as f64 + 0.5) * h;
                0.5 * h * self.gl.integrate(|x| self.g((m + 0.5 * h * x).cos()))
            })
            .sum()
    }
}

impl ChiProfile for SemiAnalyticChi {
    fn dimension(&self) -> usize {
        2
    }
    fn concentration(&self) -> f64 {
        self.l
    }
    fn sigma(&self) -> f64 {
        self.sigma
    }
    fn radius(&self) -> f64 {
        self.r
    }

    fn chi(&self, c: f64) -> f64 {
        if c.abs() >= 1.0 {
            return 0.0;
        }
        let t = c.acos();
        // the full integral vanishes, so integrate over the shorter side
        if t > 0.5 * PI {
            self.integral(t, PI)
        } else {
            -self.integral(0.0, t)
        }
    }

    fn q(&self, c: f64) -> f64 {
        let s = (1.0 - c * c).max(0.0).sqrt();
        if s < 1e-7 {
            return if c > 0.0 { -self.g(1.0) } else { self.g(-1.0) };
        }
        self.chi(c) / s
    }

    fn dchi(&self, c: f64) -> f64 {
        self.g(c) / (1.0 - c * c).sqrt()
    }
}

/// Outcome of comparing the Galerkin and semi-analytic d = 2 profiles.
#[derive(Debug, Clone, Serialize)]
pub struct CrossValidation {
    pub max_chi_diff: f64,
    pub kd_galerkin: f64,
    pub kd_semi_analytic: f64,
}

pub fn compare_2d(sol: &ChiSolution) -> Result<CrossValidation> {
    if sol.d != 2 {
        return Err(Error::UnsupportedDimension(sol.d));
    }
    let semi = SemiAnalyticChi::new(sol.l, sol.sigma, sol.r)?;
    let samples = 401;
    let max_chi_diff = (0..samples)
        .map(|j| {
            let c = (PI * j as f64 / (samples - 1) as f64).cos();
            (sol.chi(c) - semi.chi(c)).abs()
        })
        .fold(0.0, f64::max);
    Ok(CrossValidation {
        max_chi_diff,
        kd_galerkin: sol.kd,
        kd_semi_analytic: compute_kd(&semi)?,
    })
}

/// Errors when the two d = 2 routes disagree by more than 1e-6 in chi or
/// 1e-8 in k_d.
pub fn cross_validate_2d(sol: &ChiSolution) -> Result<CrossValidation> {
    let cv = compare_2d(sol)?;
    if cv.max_chi_diff > 1e-6 {
        return Err(Error::RouteDisagreement(cv.max_chi_diff));
    }
    let dk = (cv.kd_galerkin - cv.kd_semi_analytic).abs();
    if dk > 1e-8 {
        return Err(Error::RouteDisagreement(dk));
    }
    Ok(cv)
}

/// k_d = int e^{lc} chi c (1-c^2)^{(d-2)/2} dc / int e^{lc} chi (1-c^2)^{(d-2)/2} dc.
pub fn compute_kd<P: ChiProfile + ?Sized>(chi: &P) -> Result<f64> {
    let d = chi.dimension();
    let l = chi.concentration();
    let rule = cached_theta_rule(d, quadrature_size(MAX_RESOLUTION, l))?;
    let (mut num, mut den, mut scale) = (0.0, 0.0, 0.0);
    for (c, w) in rule.iter() {
        let f = w * (l * (c - 1.0)).exp() * chi.chi(c) * (1.0 - c * c).sqrt();
        num += f * c;
        den += f;
        scale += f.abs();
    }
    if !(num.is_finite() && den.is_finite()) {
        return Err(Error::NonFinite("k_d integrals"));
    }
    if den.abs() < 1e-12 * scale {
        return Err(Error::DegenerateProfile(den));
    }
    Ok(num / den)
}

/// psi_W(w) for the profile `chi`, the axis `omega` and W orthogonal to it.
pub fn gci_eval<P: ChiProfile + ?Sized>(
    w: &[f64],
    wdir: &[f64],
    chi: &P,
    omega: &[f64],
) -> Result<f64> {
    let r = chi.radius();
    let n = norm(w);
    if (n - r).abs() > 1e-12 * r {
        return Err(Error::OffSphere { radius: r, norm: n });
    }
    if dot(wdir, omega).abs() > 1e-12 * norm(wdir) {
        return Err(Error::Precondition("W must be orthogonal to Omega".into()));
    }
    Ok(chi.psi(w, wdir, omega))
}

fn check_grid<P: ChiProfile + ?Sized>(chi: &P, grid: &SphereGrid) -> Result<()> {
    if grid.dimension() != chi.dimension() {
        return Err(Error::Precondition(format!(
            "grid dimension {} does not match chi dimension {}",
            grid.dimension(),
            chi.dimension()
        )));
    }
    if (grid.radius() - chi.radius()).abs() > 1e-14 * chi.radius() {
        return Err(Error::Precondition("grid radius must equal r".into()));
    }
    Ok(())
}

/// First unit vector orthogonal to the grid axis; the E_1 used below.
pub fn first_transverse(grid: &SphereGrid) -> Vec<f64> {
    orthonormal_complement(grid.axis()).swap_remove(0)
}

/// W[psi] = int grad psi M dw / int M dw for psi = psi_{E_1}, with Omega the
/// grid axis and M the VMF law of concentration l about Omega.
pub fn w_vector<P: ChiProfile + ?Sized>(chi: &P, grid: &SphereGrid) -> Result<Vec<f64>> {
    check_grid(chi, grid)?;
    let omega = grid.axis().to_vec();
    let e1 = first_transverse(grid);
    weighted_gradient(|w| chi.grad_psi(w, &e1, &omega), chi, grid)
}

fn weighted_gradient<F, P>(grad: F, chi: &P, grid: &SphereGrid) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
    P: ChiProfile + ?Sized,
{
    let law = VmfLaw::new(grid.dimension(), chi.radius(), chi.concentration(), grid.axis())?;
    let mut mass = 0.0;
    let mut acc = vec![0.0; grid.dimension()];
    for (w, wt) in grid.iter() {
        let m = wt * law.density(w)?;
        mass += m;
        for (a, g) in acc.iter_mut().zip(grad(w)) {
            *a += m * g;
        }
    }
    Ok(acc.iter().map(|a| a / mass).collect())
}

/// Max over the grid of |(w - u) . grad psi - sigma Lap psi - (w - u) . W|
/// for an arbitrary scalar psi on the sphere. Surface derivatives are
/// spectral in angle for d = 2 (the grid must be equally spaced) and
/// fourth-order differences of the radially constant extension for d = 3.
pub fn gci_pde_residual<F: Fn(&[f64]) -> f64>(
    psi: F,
    sigma: f64,
    u: &[f64],
    wvec: &[f64],
    grid: &SphereGrid,
) -> Result<f64> {
    let r = grid.radius();
    let axis = grid.axis();
    let residual_at = |w: &[f64], grad: &[f64], lap: f64| {
        let wu: Vec<f64> = w.iter().zip(u).map(|(a, b)| a - b).collect();
        (dot(&wu, grad) - sigma * lap - dot(&wu, wvec)).abs()
    };
    let near_pole = |w: &[f64]| 1.0 - (dot(w, axis) / r).abs() < 1e-10;
    match grid.dimension() {
        2 => {
            let m = grid.len();
            let vals: Vec<f64> = grid.points().iter().map(|w| psi(w)).collect();
            let (d1, d2) = spectral_derivatives(&vals);
            let dtheta = 2.0 * PI / m as f64;
            let mut worst: f64 = 0.0;
            for (j, w) in grid.points().iter().enumerate() {
                if near_pole(w) {
                    continue;
                }
                // unit tangent in the direction of increasing angle
                let t = [-w[1] / r, w[0] / r];
                let orient = if j + 1 < m {
                    let nx = &grid.points()[j + 1];
                    dot(&[nx[0] - w[0], nx[1] - w[1]], &t).signum()
                } else {
                    let pv = &grid.points()[j - 1];
                    dot(&[w[0] - pv[0], w[1] - pv[1]], &t).signum()
                };
                let grad: Vec<f64> = t.iter().map(|x| orient * x * d1[j] / (r * dtheta)).collect();
                let lap = d2[j] / (r * r * dtheta * dtheta);
                worst = worst.max(residual_at(w, &grad, lap));
            }
            Ok(worst)
        }
        3 => {
            let h = fd::ambient_step(r);
            let ext = |v: &[f64]| {
                let n = norm(v);
                let w: Vec<f64> = v.iter().map(|x| r * x / n).collect();
                psi(&w)
            };
            let mut worst: f64 = 0.0;
            for w in grid.points() {
                if near_pole(w) {
                    continue;
                }
                let grad = fd::gradient(&ext, w, h);
                let lap = fd::laplacian(&ext, w, h);
                worst = worst.max(residual_at(w, &grad, lap));
            }
            Ok(worst)
        }
        d => Err(Error::UnsupportedDimension(d)),
    }
}

/// Derivatives with respect to the sample index of a periodic sequence.
fn spectral_derivatives(vals: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = vals.len();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let mut spectrum: Vec<Complex<f64>> = vals.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fwd.process(&mut spectrum);
    let scale = 2.0 * PI / m as f64;
    let mut first = spectrum.clone();
    let mut second = spectrum;
    for k in 0..m {
        let kk = if k <= m / 2 { k as f64 } else { k as f64 - m as f64 };
        let nyquist = m % 2 == 0 && k == m / 2;
        let ik = Complex::new(0.0, if nyquist { 0.0 } else { kk * scale });
        first[k] *= ik;
        second[k] *= -(kk * scale) * (kk * scale);
    }
    inv.process(&mut first);
    inv.process(&mut second);
    let norm = 1.0 / m as f64;
    (
        first.iter().map(|z| z.re * norm).collect(),
        second.iter().map(|z| z.re * norm).collect(),
    )
}

/// Residual of the invariant equation for psi_{E_1} built from `chi`, with
/// Omega the grid axis and u = (sigma l / r) Omega.
pub fn gci_residual<P: ChiProfile + ?Sized>(chi: &P, grid: &SphereGrid) -> Result<f64> {
    check_grid(chi, grid)?;
    let omega = grid.axis().to_vec();
    let e1 = first_transverse(grid);
    let wvec = w_vector(chi, grid)?;
    let speed = chi.sigma() * chi.concentration() / chi.radius();
    let u: Vec<f64> = omega.iter().map(|o| speed * o).collect();
    gci_pde_residual(|w| chi.psi(w, &e1, &omega), chi.sigma(), &u, &wvec, grid)
}

/// J(h) = (sigma / 2r^2) int e^{lc} h'^2 (1-c^2)^{(d-1)/2}
///      + (sigma (d-2) / 2r^2) int e^{lc} h^2 (1-c^2)^{(d-5)/2}
///      - r int e^{lc} h (1-c^2)^{(d-2)/2},
/// with all integrals over (-1, 1) evaluated by `rule`.
#[allow(clippy::too_many_arguments)]
pub fn functional_j<H, DH>(
    h: H,
    dh: DH,
    d: usize,
    l: f64,
    sigma: f64,
    r: f64,
    rule: &ThetaRule,
) -> Result<f64>
where
    H: Fn(f64) -> f64,
    DH: Fn(f64) -> f64,
{
    if rule.dimension() != d {
        return Err(Error::Precondition("rule dimension must equal d".into()));
    }
    let (mut t1, mut t2, mut t3) = (0.0, 0.0, 0.0);
    for (c, w) in rule.iter() {
        let e = w * (l * c).exp();
        let s2 = 1.0 - c * c;
        let hv = h(c);
        let dv = dh(c);
        t1 += e * dv * dv * s2;
        t2 += e * hv * hv / s2;
        t3 += e * hv * s2.sqrt();
    }
    let val = sigma / (2.0 * r * r) * (t1 + (d as f64 - 2.0) * t2) - r * t3;
    if !val.is_finite() {
        return Err(Error::NonFinite("functional J"));
    }
    Ok(val)
}

/// Profile given by an arbitrary q, for perturbation studies.
pub struct CustomChi<F: Fn(f64) -> f64> {
    pub d: usize,
    pub l: f64,
    pub sigma: f64,
    pub r: f64,
    pub q: F,
}

impl<F: Fn(f64) -> f64> ChiProfile for CustomChi<F> {
    fn dimension(&self) -> usize {
        self.d
    }
    fn concentration(&self) -> f64 {
        self.l
    }
    fn sigma(&self) -> f64 {
        self.sigma
    }
    fn radius(&self) -> f64 {
        self.r
    }
    fn q(&self, c: f64) -> f64 {
        (self.q)(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spherequad::{sphere_grid_about, theta_rule};

    fn lstar(d: usize, sigma: f64, r: f64) -> f64 {
        solve_concentration(&ModelParams::new(d, r, 1.0, sigma, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn basis_is_orthonormal() {
        let l = 3.0;
        let rule = theta_rule(3, 120).unwrap();
        let w: Vec<f64> = rule.iter().map(|(c, w)| w * (l * (c - 1.0)).exp()).collect();
        let basis = OrthoBasis::stieltjes(rule.nodes(), &w, 20);
        let mut v = vec![0.0; 20];
        let mut dv = vec![0.0; 20];
        let mut gram = DMatrix::<f64>::zeros(20, 20);
        for (&c, &wi) in rule.nodes().iter().zip(&w) {
            basis.eval(c, 20, &mut v, &mut dv);
            for j in 0..20 {
                for k in 0..20 {
                    gram[(j, k)] += wi * v[j] * v[k];
                }
            }
        }
        assert!((gram - DMatrix::identity(20, 20)).amax() < 1e-12);
    }

    #[test]
    fn rejects_supercritical_and_wrong_l() {
        assert!(matches!(
            galerkin_chi(2, 1.0, 0.5, 1.0, 8),
            Err(Error::Supercritical(_))
        ));
        assert!(matches!(
            galerkin_chi(3, 1.0, 0.2, 1.0, 8),
            Err(Error::ConcentrationMismatch { .. })
        ));
    }

    #[test]
    fn semi_analytic_satisfies_boundary_conditions() {
        let l = lstar(2, 0.2, 1.0);
        let s = SemiAnalyticChi::new(l, 0.2, 1.0).unwrap();
        assert!(s.integral(0.0, PI).abs() < 1e-12);
        assert!(s.chi(0.999_999_9).abs() < 1e-2);
        assert!(s.chi(0.3) > 0.0);
    }

    #[test]
    fn two_routes_agree_in_2d() {
        let l = lstar(2, 0.2, 1.0);
        let sol = solve_chi(2, l, 0.2, 1.0, 32).unwrap();
        let cv = compare_2d(&sol).unwrap();
        assert!(cv.max_chi_diff < 1e-6, "{cv:?}");
        assert!((cv.kd_galerkin - cv.kd_semi_analytic).abs() < 1e-8, "{cv:?}");
    }

    #[test]
    fn kd_is_stable_and_positive() {
        for d in [2, 3] {
            for s in [0.05, 0.1, 0.2] {
                let l = lstar(d, s, 1.0);
                let a = galerkin_chi(d, l, s, 1.0, 32).unwrap();
                let b = galerkin_chi(d, l, s, 1.0, 64).unwrap();
                assert!((a.kd() - b.kd()).abs() < 1e-8, "d={d} s={s}");
                assert!(a.kd() > 0.0 && a.kd() < 1.0);
                assert!(a.weak_residual() < 1e-8, "{}", a.weak_residual());
                assert!(a.j_value() < 0.0);
            }
        }
    }

    #[test]
    fn linear_in_right_hand_side_scale() {
        // chi solves a problem whose load is proportional to r; scaling r at
        // fixed sigma/r^2 and fixed l scales r^3/sigma by the same factor
        let l = lstar(3, 0.2, 1.0);
        let a = galerkin_chi(3, l, 0.2, 1.0, 24).unwrap();
        let b = galerkin_chi(3, l, 0.8, 2.0, 24).unwrap();
        for c in [-0.7, 0.0, 0.4, 0.9] {
            assert!((b.chi(c) - 2.0 * a.chi(c)).abs() < 1e-12 * a.chi(c).abs().max(1.0));
        }
        assert!((a.kd() - b.kd()).abs() < 1e-13);
    }

    #[test]
    fn functional_matches_matrix_form() {
        for d in [2, 3, 4] {
            let l = lstar(d, 0.1, 1.0);
            let sol = galerkin_chi(d, l, 0.1, 1.0, 24).unwrap();
            let rule = theta_rule(d, 300).unwrap();
            let j = functional_j(|c| sol.chi(c), |c| sol.dchi(c), d, l, 0.1, 1.0, &rule).unwrap();
            assert!((j - sol.j_value()).abs() < 1e-10 * j.abs(), "d={d}: {j} {}", sol.j_value());
            let zero = functional_j(|_| 0.0, |_| 0.0, d, l, 0.1, 1.0, &rule).unwrap();
            assert_eq!(zero, 0.0);
        }
    }

    #[test]
    fn w_vector_is_transverse_and_eigen() {
        for d in [2, 3] {
            let l = lstar(d, 0.2, 1.0);
            let sol = galerkin_chi(d, l, 0.2, 1.0, 32).unwrap();
            let mut axis = vec![0.3; d];
            axis[0] = 1.0;
            let grid = sphere_grid_about(d, 1.0, 64, &axis, 0.5).unwrap();
            let w = w_vector(&sol, &grid).unwrap();
            let omega = grid.axis();
            assert!(dot(&w, omega).abs() < 1e-8);
            let e1 = first_transverse(&grid);
            // W lies along E_1 with unit length
            for k in 0..d {
                assert!((w[k] - e1[k]).abs() < 1e-8, "d={d} {w:?} {e1:?}");
            }
            let zero = weighted_gradient(|_| vec![0.0; d], &sol, &grid).unwrap();
            assert!(norm(&zero) == 0.0);
        }
    }

    #[test]
    fn residual_small_and_discriminating() {
        for d in [2, 3] {
            let l = lstar(d, 0.2, 1.0);
            let sol = galerkin_chi(d, l, 0.2, 1.0, 32).unwrap();
            let mut axis = vec![0.0; d];
            axis[d - 1] = 1.0;
            let grid = sphere_grid_about(d, 1.0, if d == 2 { 128 } else { 24 }, &axis, 0.5).unwrap();
            let res = gci_residual(&sol, &grid).unwrap();
            let bad = CustomChi {
                d,
                l,
                sigma: 0.2,
                r: 1.0,
                q: |c: f64| sol.q(c) + 0.1 * (1.0 - c * c).sqrt(),
            };
            let res_bad = gci_residual(&bad, &grid).unwrap();
            assert!(res < 1e-6, "d={d} res={res}");
            assert!(res_bad > 10.0 * res);
            let constant =
                gci_pde_residual(|_| 1.0, 0.2, &[0.0; 3][..d], &vec![0.0; d], &grid).unwrap();
            assert!(constant < 1e-12);
        }
    }

    #[test]
    fn psi_vanishes_on_transverse_plane_and_is_odd() {
        let l = lstar(2, 0.2, 1.0);
        let sol = galerkin_chi(2, l, 0.2, 1.0, 16).unwrap();
        let omega = [1.0, 0.0];
        let e = [0.0, 1.0];
        assert_eq!(gci_eval(&[1.0, 0.0], &e, &sol, &omega).unwrap(), 0.0);
        for th in [0.3f64, 1.2, 2.9] {
            let a = gci_eval(&[th.cos(), th.sin()], &e, &sol, &omega).unwrap();
            let b = gci_eval(&[th.cos(), -th.sin()], &e, &sol, &omega).unwrap();
            assert!((a + b).abs() < 1e-15);
        }
        assert!(gci_eval(&[1.0, 0.0], &[1.0, 0.0], &sol, &omega).is_err());
    }
}
