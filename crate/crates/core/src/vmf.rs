//! Von Mises-Fisher equilibria: the Bessel-type ratio lambda(l), its lower
//! bound mu(l), the concentration fixed point, densities, moments and
//! sampling.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::spherequad::{cached_theta_rule, ThetaRule};
use crate::vecops::{dot, norm, orthonormal_complement, unit_sphere_area};

/// Nodes of the fixed rule used for every beta0 / lambda evaluation.
pub const BESSEL_NODES: usize = 200;

/// Supercritical threshold slack: sigma/r^2 >= 1/d - this means l* = 0.
pub const CRITICAL_SLACK: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub d: usize,
    pub r: f64,
    pub beta: f64,
    pub sigma: f64,
    pub epsilon: f64,
}

impl ModelParams {
    pub fn new(d: usize, r: f64, beta: f64, sigma: f64, epsilon: f64) -> Result<Self> {
        let p = ModelParams {
            d,
            r,
            beta,
            sigma,
            epsilon,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::UnsupportedDimension(self.d));
        }
        for (name, v) in [
            ("r", self.r),
            ("beta", self.beta),
            ("sigma", self.sigma),
            ("epsilon", self.epsilon),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    /// Propulsion strength, tied to friction by alpha = beta r^2.
    pub fn alpha(&self) -> f64 {
        self.beta * self.r * self.r
    }

    pub fn sigma_over_r2(&self) -> f64 {
        self.sigma / (self.r * self.r)
    }

    pub fn is_subcritical(&self) -> bool {
        self.sigma_over_r2() < 1.0 / self.d as f64 - CRITICAL_SLACK
    }
}

fn standard_rule(d: usize) -> Result<Arc<ThetaRule>> {
    cached_theta_rule(d, BESSEL_NODES)
}

/// e^{-l} beta0(l): avoids overflow for large l.
fn scaled_beta0(l: f64, rule: &ThetaRule) -> f64 {
    rule.integrate(|c| (l * (c - 1.0)).exp()) / PI
}

/// (1/pi) * integral over [0, pi] of e^{l cos t} sin^{d-2} t dt.
pub fn beta0(l: f64, d: usize) -> Result<f64> {
    let rule = standard_rule(d)?;
    Ok(rule.integrate(|c| (l * c).exp()) / PI)
}

/// Mean of cos(theta) under the density proportional to e^{l cos theta}:
/// beta0'(l) / beta0(l).
pub fn lambda_of_l(l: f64, d: usize) -> Result<f64> {
    let rule = standard_rule(d)?;
    Ok(lambda_with(l, &rule))
}

fn lambda_with(l: f64, rule: &ThetaRule) -> f64 {
    if l == 0.0 {
        return 0.0;
    }
    let shift = l.abs();
    let mut num = 0.0;
    let mut den = 0.0;
    for (c, w) in rule.iter() {
        let e = w * (l * c - shift).exp();
        num += e * c;
        den += e;
    }
    num / den
}

/// Explicit lower bound for lambda: (sqrt(d^2 + 4 l^2) - d) / (2 l).
pub fn mu_of_l(l: f64, d: usize) -> f64 {
    let d = d as f64;
    2.0 * l / ((d * d + 4.0 * l * l).sqrt() + d)
}

/// Concentration l* solving lambda(l) = (sigma/r^2) l; zero when
/// sigma/r^2 >= 1/d.
pub fn solve_concentration(params: &ModelParams) -> Result<f64> {
    params.validate()?;
    let d = params.d;
    let s = params.sigma_over_r2();
    if !params.is_subcritical() {
        return Ok(0.0);
    }
    let rule = standard_rule(d)?;
    let g = |l: f64| lambda_with(l, &rule) - s * l;
    let mut lo = (1.0 - d as f64 * s).sqrt() / s;
    if g(lo) <= 0.0 {
        return Ok(lo);
    }
    let mut hi = lo.max(f64::MIN_POSITIVE) * 2.0;
    let mut doublings = 0;
    while g(hi) >= 0.0 {
        if doublings == 64 {
            return Err(Error::BracketFailure(doublings));
        }
        lo = hi;
        hi *= 2.0;
        doublings += 1;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Lower bracket of the fixed point: the root of mu(l) = (sigma/r^2) l.
pub fn lower_bracket(params: &ModelParams) -> f64 {
    let s = params.sigma_over_r2();
    (1.0 - params.d as f64 * s).max(0.0).sqrt() / s
}

/// A von Mises-Fisher law on the sphere of radius r with concentration l
/// and axis omega, with no fixed-point constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmfLaw {
    pub d: usize,
    pub r: f64,
    pub l: f64,
    pub omega: Vec<f64>,
}

impl VmfLaw {
    pub fn new(d: usize, r: f64, l: f64, omega: &[f64]) -> Result<Self> {
        if d < 2 {
            return Err(Error::UnsupportedDimension(d));
        }
        if omega.len() != d {
            return Err(Error::param("omega", format!("expected {d} components")));
        }
        if (norm(omega) - 1.0).abs() > 1e-14 {
            return Err(Error::param("omega", format!("|omega| = {} is not 1", norm(omega))));
        }
        if !(l >= 0.0 && l.is_finite()) || !(r > 0.0) {
            return Err(Error::param("l", format!("need l >= 0 and r > 0, got l = {l}, r = {r}")));
        }
        Ok(VmfLaw {
            d,
            r,
            l,
            omega: omega.to_vec(),
        })
    }

    /// log of the normalizer of e^{l (c - 1)} over the sphere.
    fn log_normalizer(&self) -> Result<f64> {
        let rule = standard_rule(self.d)?;
        let base = self.r.powi(self.d as i32 - 1) * unit_sphere_area(self.d - 1) * PI;
        Ok((base * scaled_beta0(self.l, &rule)).ln())
    }

    /// Probability density of a unit-mass law at `w` with |w| = r.
    pub fn density(&self, w: &[f64]) -> Result<f64> {
        let n = norm(w);
        if (n - self.r).abs() > 1e-12 * self.r {
            return Err(Error::OffSphere {
                radius: self.r,
                norm: n,
            });
        }
        let c = dot(w, &self.omega) / self.r;
        Ok((self.l * (c - 1.0) - self.log_normalizer()?).exp())
    }

    /// Order parameter lambda(l) = mean of omega.Omega / r.
    pub fn mean_cos(&self) -> Result<f64> {
        lambda_of_l(self.l, self.d)
    }

    /// Mean of (omega.Omega / r)^2.
    pub fn second_moment_cos(&self) -> Result<f64> {
        let rule = standard_rule(self.d)?;
        let (mut num, mut den) = (0.0, 0.0);
        for (c, w) in rule.iter() {
            let e = w * (self.l * (c - 1.0)).exp();
            num += e * c * c;
            den += e;
        }
        Ok(num / den)
    }

    /// Covariance of the law about its mean, from the axial and transverse
    /// second moments of c.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        let r2 = self.r * self.r;
        let m1 = self.mean_cos()?;
        let m2 = self.second_moment_cos()?;
        let axial = r2 * (m2 - m1 * m1);
        let transverse = r2 * (1.0 - m2) / (self.d as f64 - 1.0);
        let o = DMatrix::from_column_slice(self.d, 1, &self.omega);
        let oo = &o * o.transpose();
        Ok(&oo * axial + (DMatrix::identity(self.d, self.d) - &oo) * transverse)
    }

    pub fn cosine_sampler(&self) -> Result<CosineSampler> {
        CosineSampler::new(self.l, self.d)
    }

    /// CDF of the marginal of c = omega.Omega / r.
    pub fn cosine_cdf(&self) -> Result<CosineCdf> {
        CosineCdf::new(self.l, self.d)
    }
}

/// A VMF state satisfying the concentration fixed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmfEquilibrium {
    pub params: ModelParams,
    pub rho: f64,
    pub l: f64,
    pub omega: Vec<f64>,
}

impl VmfEquilibrium {
    pub fn new(params: ModelParams, rho: f64, l: f64, omega: &[f64]) -> Result<Self> {
        params.validate()?;
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::param("rho", format!("must be nonnegative, got {rho}")));
        }
        VmfLaw::new(params.d, params.r, l, omega)?;
        let expected = solve_concentration(&params)?;
        let residual = if l > 0.0 {
            (lambda_of_l(l, params.d)? - params.sigma_over_r2() * l).abs()
        } else {
            0.0
        };
        // l = 0 is always an equilibrium; l > 0 must solve the fixed point
        if residual > 1e-10 || (l > 0.0 && expected == 0.0) {
            return Err(Error::ConcentrationMismatch { given: l, expected });
        }
        Ok(VmfEquilibrium {
            params,
            rho,
            l,
            omega: omega.to_vec(),
        })
    }

    /// The equilibrium at the fixed point l* (or l = 0 when supercritical).
    pub fn at_fixed_point(params: ModelParams, rho: f64, omega: &[f64]) -> Result<Self> {
        let l = solve_concentration(&params)?;
        Self::new(params, rho, l, omega)
    }

    pub fn law(&self) -> VmfLaw {
        VmfLaw {
            d: self.params.d,
            r: self.params.r,
            l: self.l,
            omega: self.omega.clone(),
        }
    }

    /// Mean velocity (sigma l / r) Omega.
    pub fn mean_velocity(&self) -> Vec<f64> {
        let s = self.params.sigma * self.l / self.params.r;
        self.omega.iter().map(|o| s * o).collect()
    }
}

pub fn vmf_density(w: &[f64], eq: &VmfEquilibrium) -> Result<f64> {
    Ok(eq.rho * eq.law().density(w)?)
}

/// Second moment matrix about the mean velocity, for unit mass.
pub fn vmf_moment_matrix(eq: &VmfEquilibrium) -> Result<DMatrix<f64>> {
    eq.law().covariance()
}

/// Samples c = omega.Omega / r from the VMF marginal.
///
/// Rejection from the uniform law for l <= 5. Above that, d = 3 uses the
/// closed-form inverse and other dimensions a monotone cubic inverse of the
/// tabulated CDF in theta.
#[derive(Debug, Clone)]
pub struct CosineSampler {
    l: f64,
    d: usize,
    table: Option<Pchip>,
}

const REJECTION_MAX_L: f64 = 5.0;

impl CosineSampler {
    pub fn new(l: f64, d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::UnsupportedDimension(d));
        }
        if !(l >= 0.0 && l.is_finite()) {
            return Err(Error::param("l", format!("need l >= 0, got {l}")));
        }
        let table = if d != 3 {
            Some(inverse_cdf_table(l, d)?)
        } else {
            None
        };
        Ok(CosineSampler { l, d, table })
    }

    pub fn sample_cos<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.l <= REJECTION_MAX_L {
            loop {
                let c = uniform_cos(rng, self.d);
                let u: f64 = rng.random();
                if u < (self.l * (c - 1.0)).exp() {
                    return c;
                }
            }
        }
        self.quantile(rng.random())
    }

    /// Inverse CDF of c, for stratified or quasi-random sampling.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match &self.table {
            Some(t) => t.eval(u).cos(),
            None if self.l < 1e-8 => 2.0 * u - 1.0,
            None => {
                let c = 1.0 + (u + (1.0 - u) * (-2.0 * self.l).exp()).ln() / self.l;
                c.clamp(-1.0, 1.0)
            }
        }
    }

    /// Direction on the sphere of radius r from two numbers in [0, 1): `u`
    /// sets c through the quantile, `v` the tangent part (d = 2: the side
    /// of omega, d = 3: the azimuth).
    pub fn direction_from_uniforms(&self, u: f64, v: f64, omega: &[f64], r: f64) -> Result<Vec<f64>> {
        let c = self.quantile(u);
        let s = (1.0 - c * c).max(0.0).sqrt();
        let basis = orthonormal_complement(omega);
        let t: Vec<f64> = match self.d {
            2 => {
                let side = if v < 0.5 { 1.0 } else { -1.0 };
                basis[0].iter().map(|x| side * x).collect()
            }
            3 => {
                let (sn, cs) = (2.0 * PI * v).sin_cos();
                basis[0].iter().zip(&basis[1]).map(|(a, b)| cs * a + sn * b).collect()
            }
            d => return Err(Error::UnsupportedDimension(d)),
        };
        let w: Vec<f64> = omega.iter().zip(&t).map(|(o, t)| c * o + s * t).collect();
        let n = norm(&w);
        Ok(w.iter().map(|x| r * x / n).collect())
    }

    /// One direction on the sphere of radius r about the unit axis `omega`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, omega: &[f64], r: f64) -> Vec<f64> {
        let c = self.sample_cos(rng);
        let t = random_tangent(rng, omega);
        let s = (1.0 - c * c).max(0.0).sqrt();
        let w: Vec<f64> = omega.iter().zip(&t).map(|(o, t)| c * o + s * t).collect();
        let n = norm(&w);
        w.iter().map(|x| r * x / n).collect()
    }
}

/// c-component of a uniform point on S^{d-1} along the first axis.
fn uniform_cos<R: Rng + ?Sized>(rng: &mut R, d: usize) -> f64 {
    let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let n = norm(&g);
    if n == 0.0 {
        return 0.0;
    }
    g[0] / n
}

/// Uniform unit vector orthogonal to the unit vector `omega`.
fn random_tangent<R: Rng + ?Sized>(rng: &mut R, omega: &[f64]) -> Vec<f64> {
    loop {
        let g: Vec<f64> = omega.iter().map(|_| rng.sample(StandardNormal)).collect();
        let p = dot(&g, omega);
        let t: Vec<f64> = g.iter().zip(omega).map(|(g, o)| g - p * o).collect();
        let n = norm(&t);
        if n > 1e-12 {
            return t.iter().map(|x| x / n).collect();
        }
    }
}

/// n i.i.d. samples of the equilibrium's direction law on rS^{d-1}.
pub fn sample_vmf(n: usize, eq: &VmfEquilibrium, seed: u64) -> Result<Vec<Vec<f64>>> {
    let sampler = CosineSampler::new(eq.l, eq.params.d)?;
    let mut rng = Pcg64Mcg::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| sampler.sample(&mut rng, &eq.omega, eq.params.r))
        .collect())
}

const PANELS: usize = 512;

/// Unnormalized theta-density e^{l (cos t - 1)} sin^{d-2} t.
fn theta_density(l: f64, d: usize, t: f64) -> f64 {
    (l * (t.cos() - 1.0)).exp() * t.sin().powi(d as i32 - 2)
}

fn gauss_legendre(n: usize) -> Arc<ThetaRule> {
    cached_theta_rule(3, n).expect("valid rule")
}

fn panel_integral(l: f64, d: usize, a: f64, b: f64, gl: &ThetaRule) -> f64 {
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    h * gl.integrate(|x| theta_density(l, d, m + h * x))
}

/// Upper theta limit beyond which the density is below e^{-700}.
fn theta_cutoff(l: f64) -> f64 {
    let c = 1.0 - 700.0 / l.max(1e-300);
    if c <= -1.0 {
        PI
    } else {
        c.acos()
    }
}

fn inverse_cdf_table(l: f64, d: usize) -> Result<Pchip> {
    let gl = gauss_legendre(16);
    let tmax = theta_cutoff(l);
    let mut thetas = vec![0.0];
    let mut cum = vec![0.0];
    let mut acc = 0.0;
    for k in 0..PANELS {
        let a = tmax * k as f64 / PANELS as f64;
        let b = tmax * (k + 1) as f64 / PANELS as f64;
        acc += panel_integral(l, d, a, b, &gl);
        if acc > *cum.last().unwrap() {
            thetas.push(b);
            cum.push(acc);
        }
    }
    let total = acc;
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::NonFinite("inverse CDF table"));
    }
    let u: Vec<f64> = cum.iter().map(|c| c / total).collect();
    Pchip::new(u, thetas)
}

/// CDF of c = cos(theta) under the VMF marginal, by composite Gauss
/// quadrature in theta.
#[derive(Debug, Clone)]
pub struct CosineCdf {
    l: f64,
    d: usize,
    total: f64,
    gl: Arc<ThetaRule>,
}

impl CosineCdf {
    pub fn new(l: f64, d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::UnsupportedDimension(d));
        }
        let gl = gauss_legendre(32);
        let mut me = CosineCdf {
            l,
            d,
            total: 1.0,
            gl,
        };
        me.total = me.tail(0.0);
        Ok(me)
    }

    /// Integral of the theta-density over [a, pi].
    fn tail(&self, a: f64) -> f64 {
        let b = theta_cutoff(self.l).max(a);
        let panels = 16;
        (0..panels)
            .map(|k| {
                let lo = a + (b - a) * k as f64 / panels as f64;
                let hi = a + (b - a) * (k + 1) as f64 / panels as f64;
                panel_integral(self.l, self.d, lo, hi, &self.gl)
            })
            .sum()
    }

    /// P(C <= c).
    pub fn cdf(&self, c: f64) -> f64 {
        if c <= -1.0 {
            return 0.0;
        }
        if c >= 1.0 {
            return 1.0;
        }
        (self.tail(c.acos()) / self.total).clamp(0.0, 1.0)
    }
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes).
#[derive(Debug, Clone)]
pub(crate) struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl Pchip {
    pub(crate) fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n || x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Precondition(
                "interpolation nodes must be strictly increasing".into(),
            ));
        }
        let delta: Vec<f64> = (0..n - 1)
            .map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i]))
            .collect();
        let mut m = vec![0.0; n];
        m[0] = delta[0];
        m[n - 1] = delta[n - 2];
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] > 0.0 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                let w1 = 2.0 * h1 + h0;
                let w2 = h1 + 2.0 * h0;
                m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        Ok(Pchip { x, y, m })
    }

    pub(crate) fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let t = t.clamp(self.x[0], self.x[n - 1]);
        let i = match self.x.partition_point(|&xi| xi <= t) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        h00 * self.y[i] + h10 * h * self.m[i] + h01 * self.y[i + 1] + h11 * h * self.m[i + 1]
    }
}
