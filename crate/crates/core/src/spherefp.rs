//! Space-homogeneous Fokker-Planck equation on the velocity sphere,
//! solved spectrally: Fourier modes on the circle (d = 2) and Legendre
//! modes in c = Omega0 . w / r for axisymmetric densities (d = 3).
//!
//! Time stepping is exponential (ETD2RK) with the diagonal diffusion as the
//! linear part. Equilibria of the full operator are therefore fixed points
//! of the discrete scheme, and the zeroth mode (mass) is never touched.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::spherequad::cached_theta_rule;
use crate::vmf::ModelParams;

#[derive(Debug, Clone, PartialEq)]
pub enum AngularDensity {
    /// f(theta) = sum_{|k| <= K} f_k e^{i k theta}; stores f_0..f_K.
    Circle { r: f64, modes: Vec<Complex<f64>> },
    /// f(c) = sum_m a_m P_m(c), c the cosine to the fixed axis.
    Axisymmetric { r: f64, coeffs: Vec<f64> },
}

fn legendre_all(c: f64, n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n + 1];
    p[0] = 1.0;
    if n >= 1 {
        p[1] = c;
    }
    for m in 1..n {
        p[m + 1] = ((2 * m + 1) as f64 * c * p[m] - m as f64 * p[m - 1]) / (m + 1) as f64;
    }
    p
}

impl AngularDensity {
    /// Projects `f` (a function of theta for d = 2, of c for d = 3) onto
    /// `k_max` modes.
    pub fn from_function<F: Fn(f64) -> f64>(d: usize, r: f64, k_max: usize, f: F) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::param("r", "must be positive"));
        }
        if k_max < 1 {
            return Err(Error::param("modes", "need at least one mode"));
        }
        match d {
            2 => {
                let m = 4 * (k_max + 1);
                let mut buf: Vec<Complex<f64>> = (0..m)
                    .map(|j| Complex::new(f(2.0 * PI * j as f64 / m as f64), 0.0))
                    .collect();
                FftPlanner::new().plan_fft_forward(m).process(&mut buf);
                let modes = buf[..=k_max].iter().map(|z| z / m as f64).collect();
                Ok(AngularDensity::Circle { r, modes })
            }
            3 => {
                let rule = cached_theta_rule(3, 2 * k_max + 32)?;
                let mut coeffs = vec![0.0; k_max + 1];
                for (c, w) in rule.iter() {
                    let p = legendre_all(c, k_max);
                    let fv = f(c);
                    for (a, pm) in coeffs.iter_mut().zip(&p) {
                        *a += w * fv * pm;
                    }
                }
                for (m, a) in coeffs.iter_mut().enumerate() {
                    *a *= (2 * m + 1) as f64 / 2.0;
                }
                Ok(AngularDensity::Axisymmetric { r, coeffs })
            }
            _ => Err(Error::UnsupportedDimension(d)),
        }
    }

    pub fn uniform(d: usize, r: f64, k_max: usize, mass: f64) -> Result<Self> {
        let mut f = Self::from_function(d, r, k_max, |_| 0.0)?;
        let area = if d == 2 { 2.0 * PI * r } else { 4.0 * PI * r * r };
        f.set_mode0(mass / area);
        Ok(f)
    }

    /// Density proportional to e^{l cos(theta - theta0)} (d = 2) or e^{l c}
    /// (d = 3, theta0 ignored), normalized to `mass`.
    pub fn vmf(d: usize, r: f64, k_max: usize, l: f64, theta0: f64, mass: f64) -> Result<Self> {
        let mut f = match d {
            2 => Self::from_function(d, r, k_max, |t| (l * ((t - theta0).cos() - 1.0)).exp())?,
            _ => Self::from_function(d, r, k_max, |c| (l * (c - 1.0)).exp())?,
        };
        let m = f.mass();
        f.scale(mass / m);
        Ok(f)
    }

    fn set_mode0(&mut self, v: f64) {
        match self {
            AngularDensity::Circle { modes, .. } => modes[0] = Complex::new(v, 0.0),
            AngularDensity::Axisymmetric { coeffs, .. } => coeffs[0] = v,
        }
    }

    fn scale(&mut self, s: f64) {
        match self {
            AngularDensity::Circle { modes, .. } => modes.iter_mut().for_each(|z| *z *= s),
            AngularDensity::Axisymmetric { coeffs, .. } => coeffs.iter_mut().for_each(|a| *a *= s),
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            AngularDensity::Circle { .. } => 2,
            AngularDensity::Axisymmetric { .. } => 3,
        }
    }

    pub fn radius(&self) -> f64 {
        match self {
            AngularDensity::Circle { r, .. } | AngularDensity::Axisymmetric { r, .. } => *r,
        }
    }

    /// Highest retained mode.
    pub fn bandwidth(&self) -> usize {
        match self {
            AngularDensity::Circle { modes, .. } => modes.len() - 1,
            AngularDensity::Axisymmetric { coeffs, .. } => coeffs.len() - 1,
        }
    }

    pub fn mass(&self) -> f64 {
        match self {
            AngularDensity::Circle { r, modes } => 2.0 * PI * r * modes[0].re,
            AngularDensity::Axisymmetric { r, coeffs } => 4.0 * PI * r * r * coeffs[0],
        }
    }

    /// u[f] = int w f dw / int f dw. For d = 3 the axis is the third unit vector.
    pub fn mean_velocity(&self) -> Vec<f64> {
        match self {
            AngularDensity::Circle { r, modes } => {
                let f1 = modes.get(1).copied().unwrap_or_default();
                vec![r * f1.re / modes[0].re, -r * f1.im / modes[0].re]
            }
            AngularDensity::Axisymmetric { r, coeffs } => {
                let a1 = coeffs.get(1).copied().unwrap_or(0.0);
                vec![0.0, 0.0, r * a1 / (3.0 * coeffs[0])]
            }
        }
    }

    /// |u| / r.
    pub fn order_parameter(&self) -> f64 {
        let u = self.mean_velocity();
        u.iter().map(|x| x * x).sum::<f64>().sqrt() / self.radius()
    }

    /// Point value at theta (d = 2) or c (d = 3).
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            AngularDensity::Circle { modes, .. } => {
                let mut s = modes[0].re;
                for (k, z) in modes.iter().enumerate().skip(1) {
                    s += 2.0 * (z * Complex::from_polar(1.0, k as f64 * x)).re;
                }
                s
            }
            AngularDensity::Axisymmetric { coeffs, .. } => legendre_all(x, coeffs.len() - 1)
                .iter()
                .zip(coeffs)
                .map(|(p, a)| p * a)
                .sum(),
        }
    }

    /// Sample points (theta or c) and values for output.
    pub fn samples(&self, count: usize) -> Vec<(f64, f64)> {
        (0..count)
            .map(|j| {
                let x = match self {
                    AngularDensity::Circle { .. } => 2.0 * PI * j as f64 / count as f64,
                    AngularDensity::Axisymmetric { .. } => {
                        -1.0 + 2.0 * j as f64 / (count.max(2) - 1) as f64
                    }
                };
                (x, self.eval(x))
            })
            .collect()
    }

    /// Smallest value over an evaluation grid of four points per mode.
    pub fn min_value(&self) -> f64 {
        self.samples(4 * (self.bandwidth() + 1) + 1)
            .iter()
            .map(|s| s.1)
            .fold(f64::INFINITY, f64::min)
    }

    /// Max modulus of the modal difference.
    pub fn modal_distance(&self, other: &AngularDensity) -> Result<f64> {
        match (self, other) {
            (AngularDensity::Circle { modes: a, .. }, AngularDensity::Circle { modes: b, .. })
                if a.len() == b.len() =>
            {
                Ok(a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max))
            }
            (
                AngularDensity::Axisymmetric { coeffs: a, .. },
                AngularDensity::Axisymmetric { coeffs: b, .. },
            ) if a.len() == b.len() => {
                Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
            }
            _ => Err(Error::Precondition("densities are not comparable".into())),
        }
    }

    /// The d = 2 density rotated by `phi`: f(theta - phi).
    pub fn rotated(&self, phi: f64) -> Result<AngularDensity> {
        match self {
            AngularDensity::Circle { r, modes } => Ok(AngularDensity::Circle {
                r: *r,
                modes: modes
                    .iter()
                    .enumerate()
                    .map(|(k, z)| z * Complex::from_polar(1.0, -(k as f64) * phi))
                    .collect(),
            }),
            _ => Err(Error::UnsupportedDimension(3)),
        }
    }
}

fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-5 {
        1.0 + z / 2.0 + z * z / 6.0
    } else {
        z.exp_m1() / z
    }
}

fn phi2(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

/// Explicit-part stability bound eps r / (|u| K).
pub fn stable_dt(f: &AngularDensity, params: &ModelParams) -> f64 {
    let u = f.order_parameter() * f.radius();
    if u == 0.0 {
        f64::INFINITY
    } else {
        params.epsilon * f.radius() / (u * f.bandwidth() as f64)
    }
}

/// Complex modal state used by both bases (imaginary parts vanish for d = 3).
fn drift(f: &AngularDensity, state: &[Complex<f64>], eps: f64) -> Vec<Complex<f64>> {
    let n = state.len();
    let mut out = vec![Complex::new(0.0, 0.0); n];
    match f {
        AngularDensity::Circle { r, .. } => {
            let f0 = state[0].re;
            let f1 = if n > 1 { state[1] } else { Complex::default() };
            let (ux, uy) = (r * f1.re / f0, -r * f1.im / f0);
            let t1 = Complex::new(uy, ux) * 0.5;
            let tm1 = t1.conj();
            let at = |k: isize| -> Complex<f64> {
                if k < 0 {
                    state[(-k) as usize].conj()
                } else if (k as usize) < n {
                    state[k as usize]
                } else {
                    Complex::default()
                }
            };
            for (k, o) in out.iter_mut().enumerate().skip(1) {
                let ki = k as isize;
                let prod = t1 * at(ki - 1) + tm1 * at(ki + 1);
                *o = -Complex::new(0.0, k as f64) * prod / (eps * r);
            }
        }
        AngularDensity::Axisymmetric { r, .. } => {
            let big_u = if n > 1 { r * state[1].re / (3.0 * state[0].re) } else { 0.0 };
            let a = |m: isize| -> f64 {
                if m >= 0 && (m as usize) < n {
                    state[m as usize].re
                } else {
                    0.0
                }
            };
            for (m, o) in out.iter_mut().enumerate().skip(1) {
                let mi = m as isize;
                let mf = m as f64;
                let b = mf * (mf + 1.0) * (a(mi - 1) / (2.0 * mf - 1.0) - a(mi + 1) / (2.0 * mf + 3.0));
                *o = Complex::new(big_u / (eps * r) * b, 0.0);
            }
        }
    }
    out
}

fn linear_rates(f: &AngularDensity, params: &ModelParams) -> Vec<f64> {
    let r = f.radius();
    let k = params.sigma / (params.epsilon * r * r);
    (0..=f.bandwidth())
        .map(|m| {
            let m = m as f64;
            match f {
                AngularDensity::Circle { .. } => -k * m * m,
                AngularDensity::Axisymmetric { .. } => -k * m * (m + 1.0),
            }
        })
        .collect()
}

fn to_state(f: &AngularDensity) -> Vec<Complex<f64>> {
    match f {
        AngularDensity::Circle { modes, .. } => modes.clone(),
        AngularDensity::Axisymmetric { coeffs, .. } => {
            coeffs.iter().map(|&a| Complex::new(a, 0.0)).collect()
        }
    }
}

fn from_state(f: &AngularDensity, state: Vec<Complex<f64>>) -> AngularDensity {
    match f {
        AngularDensity::Circle { r, .. } => AngularDensity::Circle { r: *r, modes: state },
        AngularDensity::Axisymmetric { r, .. } => AngularDensity::Axisymmetric {
            r: *r,
            coeffs: state.iter().map(|z| z.re).collect(),
        },
    }
}

/// Advances `f` by `steps` steps of size `dt`.
pub fn evolve(f: &AngularDensity, params: &ModelParams, dt: f64, steps: usize) -> Result<AngularDensity> {
    evolve_observed(f, params, dt, steps, 0, |_, _| {})
}

/// As [`evolve`], calling `observe(t, state)` at t = 0 and every `every`
/// steps (never when `every` is 0).
pub fn evolve_observed<O: FnMut(f64, &AngularDensity)>(
    f: &AngularDensity,
    params: &ModelParams,
    dt: f64,
    steps: usize,
    every: usize,
    mut observe: O,
) -> Result<AngularDensity> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", format!("must be positive, got {dt}")));
    }
    if params.d != f.dimension() {
        return Err(Error::Precondition("parameter and density dimensions differ".into()));
    }
    if (params.r - f.radius()).abs() > 1e-14 * params.r {
        return Err(Error::Precondition("density radius differs from r".into()));
    }
    if !(f.mass() > 0.0) {
        return Err(Error::Precondition("density must have positive mass".into()));
    }
    let rates = linear_rates(f, params);
    let e: Vec<f64> = rates.iter().map(|l| (l * dt).exp()).collect();
    let p1: Vec<f64> = rates.iter().map(|l| dt * phi1(l * dt)).collect();
    let p2: Vec<f64> = rates.iter().map(|l| dt * phi2(l * dt)).collect();
    let eps = params.epsilon;

    let mut cur = f.clone();
    let mut state = to_state(f);
    if every > 0 {
        observe(0.0, &cur);
    }
    for n in 1..=steps {
        let bound = stable_dt(&cur, params);
        if dt > bound {
            return Err(Error::TimeStep { dt, bound });
        }
        let n0 = drift(f, &state, eps);
        let a: Vec<Complex<f64>> = (0..state.len())
            .map(|k| state[k] * e[k] + n0[k] * p1[k])
            .collect();
        let na = drift(f, &a, eps);
        for k in 0..state.len() {
            state[k] = a[k] + (na[k] - n0[k]) * p2[k];
        }
        if state.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("sphere Fokker-Planck modes"));
        }
        cur = from_state(f, state.clone());
        if every > 0 && n % every == 0 {
            observe(n as f64 * dt, &cur);
        }
    }
    Ok(cur)
}

/// l_hat = r |u[f]| / sigma.
pub fn stationary_l(f: &AngularDensity, params: &ModelParams) -> f64 {
    f.radius() * f.order_parameter() * f.radius() / params.sigma
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vmf::{lambda_of_l, solve_concentration};

    fn params(d: usize, sigma: f64) -> ModelParams {
        ModelParams::new(d, 1.0, 1.0, sigma, 1.0).unwrap()
    }

    #[test]
    fn uniform_is_stationary() {
        for d in [2, 3] {
            let p = params(d, 0.2);
            let f = AngularDensity::uniform(d, 1.0, 16, 2.0).unwrap();
            let g = evolve(&f, &p, 0.05, 100).unwrap();
            assert!(f.modal_distance(&g).unwrap() < 1e-15);
            assert_eq!(stationary_l(&g, &p), 0.0);
        }
    }

    #[test]
    fn mean_velocity_of_vmf() {
        for d in [2, 3] {
            let f = AngularDensity::vmf(d, 1.0, 48, 3.0, 0.0, 1.0).unwrap();
            assert!((f.mass() - 1.0).abs() < 1e-13);
            let lam = lambda_of_l(3.0, d).unwrap();
            assert!((f.order_parameter() - lam).abs() < 1e-12);
        }
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        for d in [2, 3] {
            let p = params(d, 0.2);
            let l = solve_concentration(&p).unwrap();
            let f = AngularDensity::vmf(d, 1.0, 64, l, 0.4, 1.0).unwrap();
            let g = evolve(&f, &p, 0.01, 100).unwrap();
            assert!(f.modal_distance(&g).unwrap() < 1e-6);
            assert!((stationary_l(&f, &p) - l).abs() < 1e-9 * l);
        }
    }

    #[test]
    fn rotation_commutes_with_evolution() {
        let p = params(2, 0.2);
        let f = AngularDensity::from_function(2, 1.0, 32, |t| 1.0 + 0.5 * t.cos() + 0.2 * (2.0 * t).sin()).unwrap();
        let a = evolve(&f.rotated(0.7).unwrap(), &p, 0.01, 200).unwrap();
        let b = evolve(&f, &p, 0.01, 200).unwrap().rotated(0.7).unwrap();
        assert!(a.modal_distance(&b).unwrap() < 1e-12);
    }

    #[test]
    fn mass_is_conserved() {
        let p = params(3, 0.1);
        let f = AngularDensity::from_function(3, 1.0, 32, |c| 1.0 + 0.8 * c).unwrap();
        let g = evolve(&f, &p, 0.02, 500).unwrap();
        assert!((g.mass() - f.mass()).abs() <= 1e-13 * f.mass());
        assert!(g.min_value() >= -1e-10 * g.eval(1.0));
    }

    #[test]
    fn rejects_large_steps() {
        let p = params(2, 0.2);
        let f = AngularDensity::vmf(2, 1.0, 64, 4.0, 0.0, 1.0).unwrap();
        assert!(matches!(evolve(&f, &p, 1.0, 1), Err(Error::TimeStep { .. })));
    }
}
