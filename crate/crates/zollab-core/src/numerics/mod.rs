//! Shared numerical kernel: ODE integration, quadrature, small dense linear
//! algebra, `S^3` helpers and periodic-orbit search.

pub mod linalg;
pub mod ode;
pub mod orbits;
pub mod quadrature;
pub mod s3;

pub use ode::{
    flow_endpoint, flow_samples, integrate_flow, FnField, IntegratorConfig, Method, Trajectory,
    VectorField,
};
pub use orbits::{find_closed_orbit, AutonomousFlow, ClosedOrbit, FlowMap, OrbitSearch};
pub use quadrature::{
    gauss_legendre, quadrature, DiskRule, QuadratureRule, SphereGrid, TorusDiskRule,
};

/// Central finite-difference step for a quantity of the given scale.
pub fn fd_step(scale: f64) -> f64 {
    // cbrt(machine epsilon)
    6.055454452393343e-6 * scale.abs().max(1.0)
}

fn psi(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        libm::exp(-1.0 / x)
    }
}

fn dpsi(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        psi(x) / (x * x)
    }
}

/// Smooth monotone step: 0 for `x <= 0`, 1 for `x >= 1`, built from `exp(-1/x)`.
pub fn smoothstep(x: f64) -> f64 {
    let (a, b) = (psi(x), psi(1.0 - x));
    a / (a + b)
}

pub fn smoothstep_deriv(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    let (a, b) = (psi(x), psi(1.0 - x));
    let (da, db) = (dpsi(x), -dpsi(1.0 - x));
    (da * (a + b) - a * (da + db)) / ((a + b) * (a + b))
}

/// `exp(1 - 1/(1 - x))` for `x < 1`, else 0; equals 1 at `x = 0`.
pub fn bump(x: f64) -> f64 {
    if x >= 1.0 {
        0.0
    } else {
        libm::exp(1.0 - 1.0 / (1.0 - x))
    }
}

pub fn bump_deriv(x: f64) -> f64 {
    if x >= 1.0 {
        0.0
    } else {
        let d = 1.0 - x;
        -bump(x) / (d * d)
    }
}

/// `max |J^T J_0 J - J_0|` for the central-difference Jacobian `J` of `map`
/// at `x`, with `J_0` the standard form in coordinates `(x_1, y_1, x_2, y_2, ...)`.
pub fn symplectic_defect<F>(map: F, x: &[f64], h: f64) -> crate::Result<f64>
where
    F: Fn(&[f64]) -> crate::Result<alloc::vec::Vec<f64>>,
{
    let d = x.len();
    if d % 2 != 0 {
        return Err(crate::Error::Argument(alloc::format!("odd dimension {d}")));
    }
    let mut jac = alloc::vec![0.0; d * d];
    for j in 0..d {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += h;
        xm[j] -= h;
        let (yp, ym) = (map(&xp)?, map(&xm)?);
        for i in 0..d {
            jac[i * d + j] = (yp[i] - ym[i]) / (2.0 * h);
        }
    }
    let j0 = |i: usize, k: usize| -> f64 {
        if i / 2 != k / 2 {
            0.0
        } else if i % 2 == 0 && k % 2 == 1 {
            1.0
        } else if i % 2 == 1 && k % 2 == 0 {
            -1.0
        } else {
            0.0
        }
    };
    let mut worst = 0.0f64;
    for a in 0..d {
        for b in 0..d {
            let mut s = 0.0;
            for i in 0..d {
                for k in 0..d {
                    s += jac[i * d + a] * j0(i, k) * jac[k * d + b];
                }
            }
            worst = worst.max((s - j0(a, b)).abs());
        }
    }
    Ok(worst)
}

/// Root of `f` on `[lo, hi]` with `f(lo) < 0 < f(hi)`, bisected until the
/// bracket stops shrinking or `tol` is reached.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= tol {
            return mid;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flows_of_hamiltonians_are_symplectic() {
        // H = |w1|^4 / 4 + x1 x2 + y2^3 / 3, X_H = (H_y, -H_x) per complex coordinate.
        let f = FnField::new(4, |_t, z: &[f64], o: &mut [f64]| {
            let r = z[0] * z[0] + z[1] * z[1];
            o[0] = r * z[1];
            o[1] = -(r * z[0] + z[2]);
            o[2] = z[3] * z[3];
            o[3] = -z[0];
        });
        for cfg in [IntegratorConfig::adaptive(1e-12), IntegratorConfig::symplectic(0.005)] {
            let map = |x: &[f64]| flow_endpoint(&f, x, 0.0, 1.0, &cfg);
            let d = symplectic_defect(map, &[0.4, -0.2, 0.3, 0.1], 1e-5).unwrap();
            assert!(d < 1e-7, "{d}");
        }
        let squash = |x: &[f64]| Ok(alloc::vec![2.0 * x[0], x[1]]);
        assert!((symplectic_defect(squash, &[0.1, 0.2], 1e-5).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn smoothstep_shape() {
        assert_eq!(smoothstep(-1.0), 0.0);
        assert_eq!(smoothstep(1.5), 1.0);
        assert!((smoothstep(0.5) - 0.5).abs() < 1e-15);
        for k in 1..20 {
            let x = k as f64 / 20.0;
            let h = 1e-6;
            let fd = (smoothstep(x + h) - smoothstep(x - h)) / (2.0 * h);
            assert!((fd - smoothstep_deriv(x)).abs() < 1e-6);
            assert!(smoothstep_deriv(x) >= 0.0);
            let fd = (bump(x * 0.9 + h) - bump(x * 0.9 - h)) / (2.0 * h);
            assert!((fd - bump_deriv(x * 0.9)).abs() < 1e-5);
        }
    }
}
