//! Closed-orbit search: Levenberg–Marquardt on the return map with the period
//! as an unknown, falling back to bisection on a transverse section.
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use super::linalg::lm_step;
use super::ode::{flow_endpoint, flow_samples, IntegratorConfig, VectorField};
use crate::error::Result;

/// A family of time-`t` maps of an autonomous flow.
pub trait FlowMap {
    fn dim(&self) -> usize;
    fn velocity(&self, x: &[f64]) -> Vec<f64>;
    fn flow(&self, t: f64, x: &[f64]) -> Result<Vec<f64>>;
    /// The same flow evaluated with tolerances divided by `factor`.
    fn flow_tight(&self, t: f64, x: &[f64], _factor: f64) -> Result<Vec<f64>> {
        self.flow(t, x)
    }
    fn samples(&self, x: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>> {
        times.iter().map(|&t| self.flow(t, x)).collect()
    }
    fn project(&self, _x: &mut [f64]) {}
}

/// Time-`t` maps obtained by integrating an autonomous vector field.
pub struct AutonomousFlow<V> {
    pub field: V,
    pub cfg: IntegratorConfig,
}

impl<V: VectorField> AutonomousFlow<V> {
    pub fn new(field: V, cfg: IntegratorConfig) -> Self {
        AutonomousFlow { field, cfg }
    }
}

impl<V: VectorField> FlowMap for AutonomousFlow<V> {
    fn dim(&self) -> usize {
        self.field.dim()
    }
    fn velocity(&self, x: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.field.dim()];
        self.field.eval(0.0, x, &mut v);
        v
    }
    fn flow(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        flow_endpoint(&self.field, x, 0.0, t, &self.cfg)
    }
    fn flow_tight(&self, t: f64, x: &[f64], factor: f64) -> Result<Vec<f64>> {
        flow_endpoint(&self.field, x, 0.0, t, &self.cfg.tightened(factor))
    }
    fn samples(&self, x: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>> {
        flow_samples(&self.field, x, 0.0, times, &self.cfg)
    }
    fn project(&self, x: &mut [f64]) {
        self.field.project(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClosedOrbit {
    pub point: Vec<f64>,
    pub period: f64,
    /// Closure residual `|flow(period, point) - point|` at the tighter tolerance.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OrbitSearch {
    pub tol: f64,
    pub max_iter: usize,
    /// Largest divisor `k` tried by the minimal-period filter.
    pub max_divisor: usize,
    pub section_samples: usize,
}

impl Default for OrbitSearch {
    fn default() -> Self {
        OrbitSearch { tol: 1e-8, max_iter: 40, max_divisor: 8, section_samples: 400 }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Searches for a closed orbit near `seed` with period in
/// `[period_guess / 2, 2 period_guess]`. Never returns an orbit whose closure
/// is not reproduced at a tighter tolerance.
pub fn find_closed_orbit<F: FlowMap + ?Sized>(
    flow: &F,
    seed: &[f64],
    period_guess: f64,
    search: &OrbitSearch,
) -> Option<ClosedOrbit> {
    let (lo, hi) = (0.5 * period_guess, 2.0 * period_guess);
    let v0 = flow.velocity(seed);
    let speed = dotv(&v0, &v0).sqrt();
    if !(speed > 1e-12) || !(period_guess > 0.0) {
        return None;
    }
    let (exact, best) = section(flow, seed, &v0, lo, hi, search);
    let candidate = match exact {
        Some(c) => Some(c),
        None => newton(flow, seed, &v0, best.unwrap_or(period_guess), lo, hi, search),
    };
    let (x, mut period) = candidate?;
    let vx = flow.velocity(&x);
    if dotv(&vx, &vx).sqrt() < 1e-3 * speed {
        return None;
    }
    // Minimal-period filter.
    for k in (2..=search.max_divisor).rev() {
        let tau = period / k as f64;
        if let Ok(y) = flow.flow(tau, &x) {
            if dist(&y, &x) < search.tol {
                if tau < lo {
                    return None;
                }
                period = tau;
                break;
            }
        }
    }
    let y = flow.flow_tight(period, &x, 10.0).ok()?;
    let residual = dist(&y, &x);
    if residual < search.tol && period >= lo && period <= hi {
        Some(ClosedOrbit { point: x, period, residual })
    } else {
        None
    }
}

fn newton<F: FlowMap + ?Sized>(
    flow: &F,
    seed: &[f64],
    v0: &[f64],
    guess: f64,
    lo: f64,
    hi: f64,
    search: &OrbitSearch,
) -> Option<(Vec<f64>, f64)> {
    let d = flow.dim();
    let n = d + 1;
    let mut x = seed.to_vec();
    let mut period = guess;
    let residual = |x: &[f64], t: f64| -> Option<(Vec<f64>, Vec<f64>)> {
        let y = flow.flow(t, x).ok()?;
        let mut r: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
        let diff: Vec<f64> = x.iter().zip(seed).map(|(a, b)| a - b).collect();
        r.push(dotv(&diff, v0));
        Some((y, r))
    };
    let (mut y, mut r) = residual(&x, period)?;
    let mut mu = 1e-10;
    for _ in 0..search.max_iter {
        let err = dist(&y, &x);
        if err < 0.05 * search.tol {
            return Some((x, period));
        }
        let mut jac = vec![0.0; n * n];
        let h = 1e-6;
        for j in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let yp = flow.flow(period, &xp).ok()?;
            let ym = flow.flow(period, &xm).ok()?;
            for i in 0..d {
                let e = if i == j { 1.0 } else { 0.0 };
                jac[i * n + j] = (yp[i] - ym[i]) / (2.0 * h) - e;
            }
            jac[d * n + j] = v0[j];
        }
        let vy = flow.velocity(&y);
        for i in 0..d {
            jac[i * n + d] = vy[i];
        }
        let norm_r = dotv(&r, &r);
        let mut improved = false;
        for _ in 0..12 {
            let step = lm_step(&jac, &r, n, n, mu).ok()?;
            let mut xn: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            flow.project(&mut xn);
            let tn = (period + step[d]).clamp(lo, hi);
            if let Some((yn, rn)) = residual(&xn, tn) {
                if dotv(&rn, &rn) < norm_r {
                    x = xn;
                    period = tn;
                    y = yn;
                    r = rn;
                    mu = (mu * 0.1).max(1e-14);
                    improved = true;
                    break;
                }
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    if dist(&y, &x) < search.tol {
        Some((x, period))
    } else {
        None
    }
}

fn section<F: FlowMap + ?Sized>(
    flow: &F,
    seed: &[f64],
    v0: &[f64],
    lo: f64,
    hi: f64,
    search: &OrbitSearch,
) -> (Option<(Vec<f64>, f64)>, Option<f64>) {
    let m = search.section_samples.max(8);
    let times: Vec<f64> = (0..=m).map(|k| lo + (hi - lo) * k as f64 / m as f64).collect();
    let Ok(pts) = flow.samples(seed, &times) else { return (None, None) };
    let g = |p: &[f64]| {
        let diff: Vec<f64> = p.iter().zip(seed).map(|(a, b)| a - b).collect();
        dotv(&diff, v0)
    };
    let gs: Vec<f64> = pts.iter().map(|p| g(p)).collect();
    let span = (hi - lo) / m as f64;
    let speed = dotv(v0, v0).sqrt();
    let mut best: Option<(f64, f64)> = None;
    for k in 0..m {
        if gs[k] < 0.0 && gs[k + 1] >= 0.0 && dist(&pts[k], seed) < 4.0 * speed * span {
            let (mut a, mut b) = (times[k], times[k + 1]);
            for _ in 0..80 {
                let c = 0.5 * (a + b);
                let Ok(p) = flow.flow(c, seed) else { return (None, None) };
                if g(&p) < 0.0 {
                    a = c;
                } else {
                    b = c;
                }
                if b - a < 1e-15 * b.abs().max(1.0) {
                    break;
                }
            }
            let t = 0.5 * (a + b);
            let Ok(p) = flow.flow(t, seed) else { return (None, None) };
            let e = dist(&p, seed);
            if e < search.tol {
                return (Some((seed.to_vec(), t)), Some(t));
            }
            if best.is_none_or(|(be, _)| e < be) {
                best = Some((e, t));
            }
        }
    }
    (None, best.map(|b| b.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ode::FnField;
    use core::f64::consts::PI;

    struct Identity;
    impl FlowMap for Identity {
        fn dim(&self) -> usize {
            2
        }
        fn velocity(&self, _x: &[f64]) -> Vec<f64> {
            vec![0.0, 0.0]
        }
        fn flow(&self, _t: f64, x: &[f64]) -> Result<Vec<f64>> {
            Ok(x.to_vec())
        }
    }

    #[test]
    fn identity_is_rejected() {
        assert!(find_closed_orbit(&Identity, &[0.3, 0.1], 1.0, &OrbitSearch::default()).is_none());
    }

    #[test]
    fn harmonic_oscillator_period() {
        let f = FnField::new(2, |_t, x: &[f64], o: &mut [f64]| {
            o[0] = -3.0 * x[1];
            o[1] = 3.0 * x[0];
        });
        let fl = AutonomousFlow::new(f, IntegratorConfig::adaptive(1e-13));
        let orb = find_closed_orbit(&fl, &[1.0, 0.2], 2.0, &OrbitSearch::default()).unwrap();
        assert!((orb.period - 2.0 * PI / 3.0).abs() < 1e-8, "{orb:?}");
    }

    #[test]
    fn minimal_period_is_reported() {
        let f = FnField::new(2, |_t, x: &[f64], o: &mut [f64]| {
            o[0] = -x[1];
            o[1] = x[0];
        });
        let fl = AutonomousFlow::new(f, IntegratorConfig::adaptive(1e-13));
        // A guess near 2 periods would find 4 pi first; the bracket forbids it
        // and the filter reduces multiples.
        let orb = find_closed_orbit(&fl, &[1.0, 0.0], 1.2 * PI, &OrbitSearch::default()).unwrap();
        assert!((orb.period - 2.0 * PI).abs() < 1e-8);
    }
}
