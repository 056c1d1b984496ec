//! Fourth-order central finite differences in the ambient space R^d.

/// Step used for ambient derivatives near a sphere of radius `scale`:
/// eps^(1/5) balances the O(h^4) truncation against O(eps/h) roundoff.
pub fn ambient_step(scale: f64) -> f64 {
    f64::EPSILON.powf(0.2) * scale
}

#[inline]
fn shifted(x: &[f64], axis: usize, delta: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    y[axis] += delta;
    y
}

/// First derivative along `axis`.
pub fn partial<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], axis: usize, h: f64) -> f64 {
    let fp1 = f(&shifted(x, axis, h));
    let fm1 = f(&shifted(x, axis, -h));
    let fp2 = f(&shifted(x, axis, 2.0 * h));
    let fm2 = f(&shifted(x, axis, -2.0 * h));
    (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * h)
}

pub fn gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len()).map(|k| partial(f, x, k, h)).collect()
}

pub fn laplacian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], h: f64) -> f64 {
    let f0 = f(x);
    let mut acc = 0.0;
    for k in 0..x.len() {
        let fp1 = f(&shifted(x, k, h));
        let fm1 = f(&shifted(x, k, -h));
        let fp2 = f(&shifted(x, k, 2.0 * h));
        let fm2 = f(&shifted(x, k, -2.0 * h));
        acc += (-(fp2 + fm2) + 16.0 * (fp1 + fm1) - 30.0 * f0) / (12.0 * h * h);
    }
    acc
}

/// Jacobian `J[i][k] = d A_i / d x_k` of a vector field.
pub fn jacobian<F: Fn(&[f64]) -> Vec<f64>>(a: &F, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let d = x.len();
    let mut jac = vec![vec![0.0; d]; d];
    for k in 0..d {
        let ap1 = a(&shifted(x, k, h));
        let am1 = a(&shifted(x, k, -h));
        let ap2 = a(&shifted(x, k, 2.0 * h));
        let am2 = a(&shifted(x, k, -2.0 * h));
        for i in 0..d {
            jac[i][k] = (8.0 * (ap1[i] - am1[i]) - (ap2[i] - am2[i])) / (12.0 * h);
        }
    }
    jac
}

pub fn divergence<F: Fn(&[f64]) -> Vec<f64>>(a: &F, x: &[f64], h: f64) -> f64 {
    let d = x.len();
    (0..d)
        .map(|k| {
            let ap1 = a(&shifted(x, k, h))[k];
            let am1 = a(&shifted(x, k, -h))[k];
            let ap2 = a(&shifted(x, k, 2.0 * h))[k];
            let am2 = a(&shifted(x, k, -2.0 * h))[k];
            (8.0 * (ap1 - am1) - (ap2 - am2)) / (12.0 * h)
        })
        .sum()
}
