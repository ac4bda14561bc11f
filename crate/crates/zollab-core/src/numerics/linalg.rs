//! Small dense linear algebra for Newton-type solvers.
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Solves `a x = b` for a square row-major `a` by Gaussian elimination with
/// partial pivoting. `b` is overwritten with the solution.
pub fn solve(a: &mut [f64], b: &mut [f64], n: usize) -> Result<()> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r * n + col].abs() > a[piv * n + col].abs() {
                piv = r;
            }
        }
        if a[piv * n + col].abs() <= 1e-14 * scale {
            return Err(Error::Singular);
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            b.swap(col, piv);
        }
        let p = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / p;
            if f != 0.0 {
                for c in col..n {
                    a[r * n + c] -= f * a[col * n + c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for c in col + 1..n {
            s -= a[col * n + c] * b[c];
        }
        b[col] = s / a[col * n + col];
    }
    Ok(())
}

/// Levenberg–Marquardt step for the `m x n` row-major Jacobian `j` and
/// residual `r`: solves `(J^T J + mu I) dx = -J^T r`.
pub fn lm_step(j: &[f64], r: &[f64], m: usize, n: usize, mu: f64) -> Result<Vec<f64>> {
    let mut a = vec![0.0; n * n];
    let mut g = vec![0.0; n];
    for row in 0..m {
        for p in 0..n {
            let jp = j[row * n + p];
            g[p] -= jp * r[row];
            for q in 0..n {
                a[p * n + q] += jp * j[row * n + q];
            }
        }
    }
    for p in 0..n {
        a[p * n + p] += mu;
    }
    solve(&mut a, &mut g, n)?;
    Ok(g)
}

/// Symmetric 2x2 eigenvalues `(min, max)`.
pub fn sym2_eigen(a: f64, b: f64, c: f64) -> (f64, f64) {
    let m = 0.5 * (a + c);
    let d = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    (m - d, m + d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_pivoting_system() {
        let mut a = vec![0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0];
        let mut b = vec![5.0, 3.0, 6.0];
        solve(&mut a, &mut b, 3).unwrap();
        // x = (1, 2, 1)... check by residual with the original matrix
        let a0 = [0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0];
        let b0 = [5.0, 3.0, 6.0];
        for r in 0..3 {
            let s: f64 = (0..3).map(|c| a0[r * 3 + c] * b[c]).sum();
            assert!((s - b0[r]).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_is_reported() {
        let mut a = vec![1.0, 2.0, 2.0, 4.0];
        let mut b = vec![1.0, 2.0];
        assert_eq!(solve(&mut a, &mut b, 2), Err(Error::Singular));
    }
}
