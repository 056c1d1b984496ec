//! Small dense-vector helpers on `&[f64]`.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn scaled(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

pub fn normalized(a: &[f64]) -> Vec<f64> {
    let n = norm(a);
    scaled(a, 1.0 / n)
}

pub fn unit(d: usize, axis: usize) -> Vec<f64> {
    let mut e = vec![0.0; d];
    e[axis] = 1.0;
    e
}

/// Orthonormal basis of the complement of the unit vector `axis`, by
/// Gram-Schmidt on the coordinate vectors.
pub fn orthonormal_complement(axis: &[f64]) -> Vec<Vec<f64>> {
    let d = axis.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d - 1);
    // start from the coordinate axes least aligned with `axis`
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| axis[i].abs().partial_cmp(&axis[j].abs()).unwrap());
    for &i in &order {
        if basis.len() == d - 1 {
            break;
        }
        let mut v = unit(d, i);
        let p = dot(&v, axis);
        for (vk, ak) in v.iter_mut().zip(axis) {
            *vk -= p * ak;
        }
        for b in &basis {
            let p = dot(&v, b);
            for (vk, bk) in v.iter_mut().zip(b) {
                *vk -= p * bk;
            }
        }
        let n = norm(&v);
        if n > 1e-8 {
            basis.push(scaled(&v, 1.0 / n));
        }
    }
    basis
}

/// Area of the unit sphere S^{k-1} in R^k (k >= 1; the 0-sphere has "area" 2).
pub fn unit_sphere_area(k: usize) -> f64 {
    use std::f64::consts::PI;
    match k {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI * unit_sphere_area(k - 2) / (k - 2) as f64,
    }
}
