//! Explicit adaptive Dormand–Prince 5(4) and the implicit two-stage
//! Gauss–Legendre scheme (symplectic, order 4).
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// A vector field `x' = f(t, x)` on `R^d`.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]);
    /// Called after every accepted step, e.g. to renormalize onto `S^3`.
    fn project(&self, _x: &mut [f64]) {}
}

impl<V: VectorField + ?Sized> VectorField for &V {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (**self).eval(t, x, out)
    }
    fn project(&self, x: &mut [f64]) {
        (**self).project(x)
    }
}

/// Vector field from a closure.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64])> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnField { dim, f }
    }
}

impl<F: Fn(f64, &[f64], &mut [f64])> VectorField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.f)(t, x, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Method {
    /// Dormand–Prince 5(4) with error control.
    AdaptiveRk,
    /// Two-stage Gauss–Legendre with fixed step `max_step`.
    Symplectic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IntegratorConfig {
    pub method: Method,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::AdaptiveRk,
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            max_step: 0.25,
            max_steps: 2_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn adaptive(tol: f64) -> Self {
        IntegratorConfig { abs_tol: tol, rel_tol: tol, ..Default::default() }
    }

    pub fn symplectic(step: f64) -> Self {
        IntegratorConfig { method: Method::Symplectic, max_step: step, ..Default::default() }
    }

    /// Same configuration with tolerances (or step) divided by `factor`.
    pub fn tightened(&self, factor: f64) -> Self {
        let mut c = *self;
        match c.method {
            Method::AdaptiveRk => {
                c.abs_tol = (c.abs_tol / factor).max(1e-15);
                c.rel_tol = (c.rel_tol / factor).max(1e-15);
            }
            Method::Symplectic => c.max_step /= factor.sqrt().sqrt(),
        }
        c.max_steps = c.max_steps.saturating_mul(4);
        c
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.abs_tol > 0.0
            && self.rel_tol > 0.0
            && self.max_step > 0.0
            && self.abs_tol.is_finite()
            && self.rel_tol.is_finite()
            && self.max_step.is_finite()
            && self.max_steps > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Configuration("integrator tolerances and max_step must be positive".into()))
        }
    }
}

/// Sampled solution with optional action accumulators.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    /// `[int lambda_hat_0, int H dt]` when the producer tracks them, else zero.
    pub action_integrals: [f64; 2],
}

impl Trajectory {
    pub fn endpoint(&self) -> &[f64] {
        self.points.last().map(|p| p.as_slice()).unwrap_or(&[])
    }
    pub fn action(&self) -> f64 {
        self.action_integrals[0] + self.action_integrals[1]
    }
}

/// Integrates `x' = field(t, x)` from `t = 0` to `t_end`, recording every step.
pub fn integrate_flow<V: VectorField + ?Sized>(
    field: &V,
    x0: &[f64],
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let mut times = vec![0.0];
    let mut points = vec![x0.to_vec()];
    drive(field, x0, 0.0, t_end, cfg, &[], &mut |t, x, _| {
        times.push(t);
        points.push(x.to_vec());
    })?;
    Ok(Trajectory { times, points, action_integrals: [0.0; 2] })
}

/// Endpoint of the solution on `[t0, t1]`; `t1 < t0` integrates backwards.
pub fn flow_endpoint<V: VectorField + ?Sized>(
    field: &V,
    x0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>> {
    drive(field, x0, t0, t1, cfg, &[], &mut |_, _, _| {})
}

/// Solution values at the given times (monotone in the direction of `times`).
pub fn flow_samples<V: VectorField + ?Sized>(
    field: &V,
    x0: &[f64],
    t0: f64,
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(times.len());
    let Some(&t1) = times.last() else { return Ok(out) };
    let mut pending = times.iter().peekable();
    while let Some(&&t) = pending.peek() {
        if t == t0 {
            out.push(x0.to_vec());
            pending.next();
        } else {
            break;
        }
    }
    let stops: Vec<f64> = pending.copied().collect();
    drive(field, x0, t0, t1, cfg, &stops, &mut |_, x, is_stop| {
        if is_stop {
            out.push(x.to_vec());
        }
    })?;
    Ok(out)
}

const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn check_finite(x: &[f64], t: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::DomainEscape { t })
    }
}

fn drive<V: VectorField + ?Sized>(
    field: &V,
    x0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    stops: &[f64],
    record: &mut dyn FnMut(f64, &[f64], bool),
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let d = field.dim();
    if x0.len() != d {
        return Err(Error::Argument("initial point has wrong dimension".into()));
    }
    if !t1.is_finite() || !t0.is_finite() {
        return Err(Error::Argument("integration interval must be finite".into()));
    }
    check_finite(x0, t0)?;
    let mut x = x0.to_vec();
    if t1 == t0 {
        return Ok(x);
    }
    match cfg.method {
        Method::AdaptiveRk => dopri(field, &mut x, t0, t1, cfg, stops, record)?,
        Method::Symplectic => gauss2(field, &mut x, t0, t1, cfg, stops, record)?,
    }
    Ok(x)
}

fn dopri<V: VectorField + ?Sized>(
    field: &V,
    x: &mut [f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    stops: &[f64],
    record: &mut dyn FnMut(f64, &[f64], bool),
) -> Result<()> {
    let d = x.len();
    let dir = if t1 > t0 { 1.0 } else { -1.0 };
    let mut k = vec![vec![0.0; d]; 7];
    let mut xs = vec![0.0; d];
    let mut xn = vec![0.0; d];
    let mut t = t0;
    let mut stop_idx = 0;

    field.eval(t, x, &mut k[0]);
    check_finite(&k[0], t)?;
    let d0 = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let d1 = k[0].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-4 } else { 0.01 * d0 / d1 };
    h = h.min(cfg.max_step).min((t1 - t0).abs());
    let mut steps = 0usize;

    while (t1 - t) * dir > 0.0 {
        steps += 1;
        if steps > cfg.max_steps {
            return Err(Error::StiffOrBlowUp { t });
        }
        let target = if stop_idx < stops.len() { stops[stop_idx] } else { t1 };
        let mut hs = h.min((target - t).abs());
        let hits_stop = hs >= (target - t).abs() * (1.0 - 1e-14);
        if hits_stop {
            hs = (target - t).abs();
        }
        let hd = hs * dir;
        field.eval(t, x, &mut k[0]);
        for s in 1..7 {
            for i in 0..d {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += DP_A[s][j] * kj[i];
                }
                xs[i] = x[i] + hd * acc;
            }
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            field.eval(t + DP_C[s] * hd, &xs, &mut tail[0]);
        }
        // xs now holds the 5th-order solution (row 7 = b).
        let mut err = 0.0f64;
        let mut finite = true;
        for i in 0..d {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += DP_E[j] * kj[i];
            }
            e *= hd;
            xn[i] = xs[i];
            if !xn[i].is_finite() || !e.is_finite() {
                finite = false;
            }
            let sc = cfg.abs_tol + cfg.rel_tol * x[i].abs().max(xn[i].abs());
            err = err.max(e.abs() / sc);
        }
        if !finite {
            if hs < 1e-12 * t.abs().max(1.0) {
                return Err(Error::DomainEscape { t });
            }
            h = hs * 0.25;
            continue;
        }
        if err <= 1.0 {
            t = if hits_stop { target } else { t + hd };
            x.copy_from_slice(&xn);
            field.project(x);
            let is_stop = hits_stop && stop_idx < stops.len();
            if is_stop {
                stop_idx += 1;
            }
            record(t, x, is_stop);
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if !hits_stop || hs >= h {
                h = (hs * fac).min(cfg.max_step);
            }
        } else {
            let fac = (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            h = hs * fac;
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::StiffOrBlowUp { t });
            }
        }
    }
    Ok(())
}

fn gauss2<V: VectorField + ?Sized>(
    field: &V,
    x: &mut [f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    stops: &[f64],
    record: &mut dyn FnMut(f64, &[f64], bool),
) -> Result<()> {
    let s3 = 3.0f64.sqrt();
    let c = [0.5 - s3 / 6.0, 0.5 + s3 / 6.0];
    let a = [[0.25, 0.25 - s3 / 6.0], [0.25 + s3 / 6.0, 0.25]];
    let d = x.len();
    let mut k1 = vec![0.0; d];
    let mut k2 = vec![0.0; d];
    let mut n1 = vec![0.0; d];
    let mut n2 = vec![0.0; d];
    let mut y = vec![0.0; d];

    let mut bounds: Vec<(f64, bool)> = stops.iter().map(|&s| (s, true)).collect();
    bounds.push((t1, false));
    let mut t = t0;
    let mut steps = 0usize;
    for (target, is_stop) in bounds {
        let span = target - t;
        let n = ((span.abs() / cfg.max_step).ceil() as usize).max(1);
        let h = span / n as f64;
        for _ in 0..n {
            steps += 1;
            if steps > cfg.max_steps {
                return Err(Error::StiffOrBlowUp { t });
            }
            field.eval(t, x, &mut k1);
            k2.copy_from_slice(&k1);
            let mut converged = false;
            for _ in 0..200 {
                for i in 0..d {
                    y[i] = x[i] + h * (a[0][0] * k1[i] + a[0][1] * k2[i]);
                }
                field.eval(t + c[0] * h, &y, &mut n1);
                for i in 0..d {
                    y[i] = x[i] + h * (a[1][0] * k1[i] + a[1][1] * k2[i]);
                }
                field.eval(t + c[1] * h, &y, &mut n2);
                let mut delta = 0.0f64;
                let mut scale = 1e-300f64;
                for i in 0..d {
                    delta = delta.max((n1[i] - k1[i]).abs()).max((n2[i] - k2[i]).abs());
                    scale = scale.max(n1[i].abs()).max(n2[i].abs());
                }
                k1.copy_from_slice(&n1);
                k2.copy_from_slice(&n2);
                if !delta.is_finite() {
                    return Err(Error::DomainEscape { t });
                }
                if delta <= 4.0 * f64::EPSILON * scale {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::StiffOrBlowUp { t });
            }
            for i in 0..d {
                x[i] += 0.5 * h * (k1[i] + k2[i]);
            }
            t += h;
            field.project(x);
            check_finite(x, t)?;
            record(t, x, false);
        }
        t = target;
        if is_stop {
            record(t, x, true);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn rotation() -> FnField<impl Fn(f64, &[f64], &mut [f64])> {
        FnField::new(2, |_t, x: &[f64], o: &mut [f64]| {
            o[0] = -x[1];
            o[1] = x[0];
        })
    }

    #[test]
    fn full_rotation_returns() {
        let x = flow_endpoint(&rotation(), &[1.0, 0.0], 0.0, 2.0 * PI, &IntegratorConfig::adaptive(1e-13))
            .unwrap();
        assert!((x[0] - 1.0).abs() < 1e-9 && x[1].abs() < 1e-9, "{x:?}");
    }

    #[test]
    fn backward_integration_inverts() {
        let cfg = IntegratorConfig::adaptive(1e-13);
        let f = rotation();
        let x = flow_endpoint(&f, &[0.3, -0.2], 0.0, 1.7, &cfg).unwrap();
        let y = flow_endpoint(&f, &x, 1.7, 0.0, &cfg).unwrap();
        assert!((y[0] - 0.3).abs() < 1e-11 && (y[1] + 0.2).abs() < 1e-11);
    }

    #[test]
    fn symplectic_rotation_is_accurate() {
        let x = flow_endpoint(&rotation(), &[1.0, 0.0], 0.0, 2.0 * PI, &IntegratorConfig::symplectic(0.01))
            .unwrap();
        assert!((x[0] - 1.0).abs() < 1e-8 && x[1].abs() < 1e-8, "{x:?}");
        assert!((x[0] * x[0] + x[1] * x[1] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn samples_hit_requested_times() {
        let times = [0.0, 0.5, 1.0, 2.5];
        let s = flow_samples(&rotation(), &[1.0, 0.0], 0.0, &times, &IntegratorConfig::default()).unwrap();
        assert_eq!(s.len(), 4);
        for (t, p) in times.iter().zip(&s) {
            assert!((p[0] - t.cos()).abs() < 1e-10 && (p[1] - t.sin()).abs() < 1e-10);
        }
    }

    #[test]
    fn nan_field_is_domain_escape() {
        let f = FnField::new(1, |_t, _x: &[f64], o: &mut [f64]| o[0] = f64::NAN);
        let e = flow_endpoint(&f, &[0.0], 0.0, 1.0, &IntegratorConfig::default()).unwrap_err();
        assert!(matches!(e, Error::DomainEscape { .. }));
    }

    #[test]
    fn blow_up_is_reported() {
        let f = FnField::new(1, |_t, x: &[f64], o: &mut [f64]| o[0] = x[0] * x[0]);
        let e = flow_endpoint(&f, &[1.0], 0.0, 2.0, &IntegratorConfig::default()).unwrap_err();
        assert!(matches!(e, Error::StiffOrBlowUp { .. } | Error::DomainEscape { .. }));
    }

    #[test]
    fn zero_field_is_constant() {
        let f = FnField::new(2, |_t, _x: &[f64], o: &mut [f64]| o.fill(0.0));
        let tr = integrate_flow(&f, &[0.4, 0.1], 3.0, &IntegratorConfig::default()).unwrap();
        assert!(tr.points.iter().all(|p| p == &[0.4, 0.1]));
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
    }
}
