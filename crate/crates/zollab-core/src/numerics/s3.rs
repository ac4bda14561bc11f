//! Vector helpers on `R^4 = C^2` and the Hopf fibration.
#[allow(unused_imports)]
use num_traits::Float;

pub type P4 = [f64; 4];

#[inline]
pub fn dot(a: &P4, b: &P4) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

#[inline]
pub fn norm(a: &P4) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn normalize(a: &P4) -> P4 {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n, a[3] / n]
}

/// Multiplication by `i` on each complex coordinate.
#[inline]
pub fn mul_i(a: &P4) -> P4 {
    [-a[1], a[0], -a[3], a[2]]
}

#[inline]
pub fn add(a: &P4, b: &P4) -> P4 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

#[inline]
pub fn sub(a: &P4, b: &P4) -> P4 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]]
}

#[inline]
pub fn scale(c: f64, a: &P4) -> P4 {
    [c * a[0], c * a[1], c * a[2], c * a[3]]
}

#[inline]
pub fn dist(a: &P4, b: &P4) -> f64 {
    norm(&sub(a, b))
}

pub fn to_p4(x: &[f64]) -> P4 {
    [x[0], x[1], x[2], x[3]]
}

/// `|z_1|^2`.
#[inline]
pub fn u1(z: &P4) -> f64 {
    z[0] * z[0] + z[1] * z[1]
}

/// `lambda_0(v)` at `z`, i.e. `<iz, v>/2`.
#[inline]
pub fn lambda0(z: &P4, v: &P4) -> f64 {
    0.5 * dot(&mul_i(z), v)
}

/// Component of `v` tangent to the unit sphere at `z`.
#[inline]
pub fn tangent(z: &P4, v: &P4) -> P4 {
    sub(v, &scale(dot(v, z), z))
}

/// Component of `v` in the contact plane `xi = {z, iz}^perp`.
#[inline]
pub fn contact_part(z: &P4, v: &P4) -> P4 {
    let iz = mul_i(z);
    sub(&sub(v, &scale(dot(v, z), z)), &scale(dot(v, &iz), &iz))
}

/// Point from Hopf coordinates: `(cos eta e^{i sigma}, sin eta e^{i(sigma - delta)})`.
pub fn from_hopf(eta: f64, delta: f64, sigma: f64) -> P4 {
    let (c, s) = (eta.cos(), eta.sin());
    [c * sigma.cos(), c * sigma.sin(), s * (sigma - delta).cos(), s * (sigma - delta).sin()]
}

/// Hopf map `S^3 -> S^2`: `(|z1|^2 - |z2|^2, 2 z1 conj(z2))`.
pub fn hopf(z: &P4) -> [f64; 3] {
    let re = z[0] * z[2] + z[1] * z[3];
    let im = z[1] * z[2] - z[0] * z[3];
    [u1(z) - (z[2] * z[2] + z[3] * z[3]), 2.0 * re, 2.0 * im]
}

/// A point of the fiber over `p` in `S^2`.
pub fn hopf_lift(p: &[f64; 3]) -> P4 {
    let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    let p = [p[0] / r, p[1] / r, p[2] / r];
    let c2 = 0.5 * (1.0 + p[0]);
    if c2 < 1e-300 {
        return [0.0, 0.0, 1.0, 0.0];
    }
    let c = c2.sqrt();
    // z1 = c real, conj(z2) = (p2 + i p3)/(2c)
    [c, 0.0, p[1] / (2.0 * c), -p[2] / (2.0 * c)]
}

/// Round Reeb flow `z -> e^{2it} z`.
pub fn round_flow(t: f64, z: &P4) -> P4 {
    let (s, c) = (2.0 * t).sin_cos();
    [c * z[0] - s * z[1], s * z[0] + c * z[1], c * z[2] - s * z[3], s * z[2] + c * z[3]]
}

/// Rotate the two complex coordinates by independent angles.
pub fn rotate(z: &P4, th1: f64, th2: f64) -> P4 {
    let (s1, c1) = th1.sin_cos();
    let (s2, c2) = th2.sin_cos();
    [c1 * z[0] - s1 * z[1], s1 * z[0] + c1 * z[1], c2 * z[2] - s2 * z[3], s2 * z[2] + c2 * z[3]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hopf_lift_is_a_section() {
        for &p in &[[1.0, 0.0, 0.0], [0.0, 0.6, 0.8], [-0.3, 0.4, -0.866], [-1.0, 0.0, 0.0]] {
            let z = hopf_lift(&p);
            let q = hopf(&z);
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            for k in 0..3 {
                assert!((q[k] - p[k] / r).abs() < 1e-12, "{p:?} {q:?}");
            }
            assert!((norm(&z) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn round_flow_is_in_the_fiber() {
        let z = from_hopf(0.4, 1.1, 0.3);
        let w = round_flow(0.77, &z);
        let (a, b) = (hopf(&z), hopf(&w));
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-14);
        }
        assert!((lambda0(&z, &scale(2.0, &mul_i(&z))) - 1.0).abs() < 1e-15);
    }
}
