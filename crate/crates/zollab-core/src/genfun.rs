//! Generating functions `i(z - phi(z)) = grad S((z + phi(z))/2)` of
//! near-identity symplectomorphisms of `C^m`, the Hamilton–Jacobi equation and
//! the flattening of a Hamiltonian near a zero-action fixed point.
//!
//! With `X_H = -i grad H` the Hamilton–Jacobi equation of a path `S_t`
//! generating `phi_H^t` reads `d/dt S_t(z) = -H(t, z + (i/2) grad S_t(z))`,
//! and the action of a fixed point is `A(z) = -S(z)`.
use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::lift::{
    disk_flow, disk_flow_between, plateau_eta, Reparametrized, TimePeriodicHamiltonian, W,
};
use crate::numerics::linalg::solve;
use crate::numerics::{fd_step, gauss_legendre, smoothstep, smoothstep_deriv, IntegratorConfig};

fn mul_i(z: &[f64]) -> Vec<f64> {
    z.chunks(2).flat_map(|c| [-c[1], c[0]]).collect()
}

fn norm(z: &[f64]) -> f64 {
    z.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(u, v)| a * u + v).collect()
}

/// A symplectomorphism of `C^m` (points stored as `[x1, y1, ..., xm, ym]`).
pub trait SymplecticMap: Send + Sync {
    fn m(&self) -> usize;
    fn apply(&self, z: &[f64]) -> Result<Vec<f64>>;
    /// The map is the identity outside this radius (`INFINITY` for maps
    /// considered only on a patch).
    fn support_radius(&self) -> f64;
}

/// Rotation `z -> e^{i theta} z` of `C`.
#[derive(Debug, Clone, Copy)]
pub struct Rotation {
    pub theta: f64,
}

impl SymplecticMap for Rotation {
    fn m(&self) -> usize {
        1
    }
    fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        let (s, c) = self.theta.sin_cos();
        Ok(vec![c * z[0] - s * z[1], s * z[0] + c * z[1]])
    }
    fn support_radius(&self) -> f64 {
        f64::INFINITY
    }
}

/// `phi_H^t` of a disk Hamiltonian.
#[derive(Clone)]
pub struct HamiltonianTimeMap {
    pub h: Arc<dyn TimePeriodicHamiltonian>,
    pub t: f64,
    pub cfg: IntegratorConfig,
}

impl SymplecticMap for HamiltonianTimeMap {
    fn m(&self) -> usize {
        1
    }
    fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(disk_flow(&*self.h, self.t, &[z[0], z[1]], &self.cfg)?.point.to_vec())
    }
    fn support_radius(&self) -> f64 {
        self.h.support_radius()
    }
}

/// A scalar function `S` on `C^m` with gradient.
pub trait GeneratingFunction: Send + Sync {
    fn m(&self) -> usize;
    fn value(&self, z: &[f64]) -> Result<f64>;
    fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        let h = fd_step(1.0);
        (0..2 * self.m())
            .map(|k| {
                let mut p = z.to_vec();
                let mut q = z.to_vec();
                p[k] += h;
                q[k] -= h;
                Ok((self.value(&p)? - self.value(&q)?) / (2.0 * h))
            })
            .collect()
    }
    fn support_radius(&self) -> f64 {
        f64::INFINITY
    }
}

/// `S(z) = c |z|^2`.
#[derive(Debug, Clone, Copy)]
pub struct Quadratic {
    pub c: f64,
    pub m: usize,
}

impl GeneratingFunction for Quadratic {
    fn m(&self) -> usize {
        self.m
    }
    fn value(&self, z: &[f64]) -> Result<f64> {
        Ok(self.c * dot(z, z))
    }
    fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(z.iter().map(|x| 2.0 * self.c * x).collect())
    }
}

/// Generating function given by a closure with compact support.
pub struct FnGenerating<F> {
    pub m: usize,
    pub support: f64,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> GeneratingFunction for FnGenerating<F> {
    fn m(&self) -> usize {
        self.m
    }
    fn value(&self, z: &[f64]) -> Result<f64> {
        Ok((self.f)(z))
    }
    fn support_radius(&self) -> f64 {
        self.support
    }
}

/// Solves `(z + phi(z))/2 = x` by Newton's method with a finite-difference
/// Jacobian; returns `(z, phi(z))`.
pub fn midpoint_preimage(map: &dyn SymplecticMap, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = 2 * map.m();
    let mut z = x.to_vec();
    let h = fd_step(1.0);
    for _ in 0..40 {
        let y = map.apply(&z)?;
        let r: Vec<f64> = (0..d).map(|k| 0.5 * (z[k] + y[k]) - x[k]).collect();
        let rn = norm(&r);
        if rn <= 1e-15 * (1.0 + norm(x)) {
            return Ok((z, y));
        }
        let mut jac = vec![0.0; d * d];
        for c in 0..d {
            let mut p = z.clone();
            let mut q = z.clone();
            p[c] += h;
            q[c] -= h;
            let (yp, yq) = (map.apply(&p)?, map.apply(&q)?);
            for rr in 0..d {
                let dphi = (yp[rr] - yq[rr]) / (2.0 * h);
                jac[rr * d + c] = 0.5 * (if rr == c { 1.0 } else { 0.0 } + dphi);
            }
        }
        let mut step: Vec<f64> = r.iter().map(|v| -v).collect();
        solve(&mut jac, &mut step, d).map_err(|_| Error::NotNearIdentity("midpoint map is singular".into()))?;
        if norm(&step) > 1.0 {
            return Err(Error::NotNearIdentity(format!("midpoint Newton step {:.3e} too large", norm(&step))));
        }
        let done = norm(&step) <= 1e-15 * (1.0 + norm(&z));
        z = axpy(1.0, &step, &z);
        if done {
            let y = map.apply(&z)?;
            return Ok((z, y));
        }
    }
    let y = map.apply(&z)?;
    let r: Vec<f64> = (0..d).map(|k| 0.5 * (z[k] + y[k]) - x[k]).collect();
    if norm(&r) < 1e-11 {
        Ok((z, y))
    } else {
        Err(Error::NotNearIdentity(format!("midpoint equation residual {:.3e}", norm(&r))))
    }
}

/// `S` recovered from a map: the gradient solves the defining identity at
/// each point and the value integrates it along a segment from a basepoint.
#[derive(Clone)]
pub struct Reconstructed {
    pub map: Arc<dyn SymplecticMap>,
    pub base: Vec<f64>,
    pub base_value: f64,
    /// Gauss–Legendre panels along each path segment.
    pub panels: usize,
}

impl Reconstructed {
    fn segment(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        let (x, w) = gauss_legendre(8);
        let dir: Vec<f64> = b.iter().zip(a).map(|(u, v)| u - v).collect();
        let mut s = 0.0;
        for p in 0..self.panels {
            for (xi, wi) in x.iter().zip(&w) {
                let u = (p as f64 + 0.5 * (xi + 1.0)) / self.panels as f64;
                let pt = axpy(u, &dir, a);
                s += 0.5 * wi / self.panels as f64 * dot(&self.gradient(&pt)?, &dir);
            }
        }
        Ok(s)
    }

    /// Value obtained along the path basepoint -> `via` -> `z`.
    pub fn value_via(&self, z: &[f64], via: &[f64]) -> Result<f64> {
        Ok(self.base_value + self.segment(&self.base, via)? + self.segment(via, z)?)
    }
}

impl GeneratingFunction for Reconstructed {
    fn m(&self) -> usize {
        self.map.m()
    }
    fn value(&self, z: &[f64]) -> Result<f64> {
        Ok(self.base_value + self.segment(&self.base, z)?)
    }
    fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        let (p, y) = midpoint_preimage(&*self.map, z)?;
        Ok(mul_i(&axpy(-1.0, &y, &p)))
    }
    fn support_radius(&self) -> f64 {
        self.map.support_radius()
    }
}

/// Generating function of a compactly supported near-identity map,
/// normalized to vanish outside the support.
pub fn generating_function_of(map: Arc<dyn SymplecticMap>) -> Result<Reconstructed> {
    let r = map.support_radius();
    if !r.is_finite() {
        return Err(Error::Argument("map without compact support needs an explicit basepoint".into()));
    }
    let mut base = vec![0.0; 2 * map.m()];
    base[0] = if r < 1.0 { 0.5 * (1.0 + r) } else { 1.5 * r };
    generating_function_with_base(map, base, 0.0)
}

/// Generating function with prescribed value at `base` (for maps on a patch).
pub fn generating_function_with_base(map: Arc<dyn SymplecticMap>, base: Vec<f64>, base_value: f64) -> Result<Reconstructed> {
    midpoint_preimage(&*map, &base)?;
    Ok(Reconstructed { map, base, base_value, panels: 24 })
}

/// Largest of `|S|`, `|grad S|` and the Hessian entries over `points`
/// (second differences with step `h`).
pub fn c2_norm(s: &dyn GeneratingFunction, points: &[Vec<f64>]) -> Result<f64> {
    let h = 1e-4;
    let mut out = 0.0f64;
    for p in points {
        out = out.max(s.value(p)?.abs());
        let g = s.gradient(p)?;
        out = out.max(norm(&g));
        for k in 0..p.len() {
            let mut a = p.clone();
            let mut b = p.clone();
            a[k] += h;
            b[k] -= h;
            let (ga, gb) = (s.gradient(&a)?, s.gradient(&b)?);
            for j in 0..p.len() {
                out = out.max(((ga[j] - gb[j]) / (2.0 * h)).abs());
            }
        }
    }
    Ok(out)
}

/// Points of a square grid of side `n` clipped to the disk of radius `r` in `C`.
pub fn disk_grid(r: f64, n: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let x = -r + 2.0 * r * (i as f64 + 0.5) / n as f64;
            let y = -r + 2.0 * r * (j as f64 + 0.5) / n as f64;
            if x * x + y * y < r * r {
                out.push(vec![x, y]);
            }
        }
    }
    out
}

/// The symplectomorphism defined by `S`, evaluated pointwise by Newton's method.
#[derive(Clone)]
pub struct GeneratedMap {
    pub s: Arc<dyn GeneratingFunction>,
}

impl SymplecticMap for GeneratedMap {
    fn m(&self) -> usize {
        self.s.m()
    }
    fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        let d = z.len();
        let mut y = z.to_vec();
        let h = 1e-5;
        let mut last = f64::INFINITY;
        for _ in 0..50 {
            let mid: Vec<f64> = z.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
            let g = self.s.gradient(&mid)?;
            let lhs = mul_i(&axpy(-1.0, &y, z));
            let r: Vec<f64> = lhs.iter().zip(&g).map(|(a, b)| a - b).collect();
            let rn = norm(&r);
            if rn <= 1e-15 * (1.0 + norm(z)) || (rn >= last && rn < 1e-12) {
                return Ok(y);
            }
            last = rn;
            // J = -i - Hess S(mid) / 2
            let mut jac = vec![0.0; d * d];
            for c in 0..d {
                let mut a = mid.clone();
                let mut b = mid.clone();
                a[c] += h;
                b[c] -= h;
                let (ga, gb) = (self.s.gradient(&a)?, self.s.gradient(&b)?);
                for rr in 0..d {
                    jac[rr * d + c] = -0.5 * (ga[rr] - gb[rr]) / (2.0 * h);
                }
            }
            for k in 0..d / 2 {
                // -i acting on (x, y) is (y, -x)
                jac[(2 * k) * d + 2 * k + 1] += 1.0;
                jac[(2 * k + 1) * d + 2 * k] -= 1.0;
            }
            let mut step: Vec<f64> = r.iter().map(|v| -v).collect();
            solve(&mut jac, &mut step, d)
                .map_err(|_| Error::ThresholdExceeded { measured: rn, threshold: 1e-12 })?;
            y = axpy(1.0, &step, &y);
            if !y.iter().all(|v| v.is_finite()) || norm(&step) > 1e3 {
                return Err(Error::ThresholdExceeded { measured: rn, threshold: 1e-12 });
            }
        }
        Err(Error::ThresholdExceeded { measured: last, threshold: 1e-12 })
    }
    fn support_radius(&self) -> f64 {
        self.s.support_radius()
    }
}

/// The map generated by `S`, refusing functions whose sampled `C^2` norm on
/// `points` exceeds `threshold`.
pub fn map_of_generating_function(
    s: Arc<dyn GeneratingFunction>,
    points: &[Vec<f64>],
    threshold: f64,
) -> Result<GeneratedMap> {
    let n = c2_norm(&*s, points)?;
    if n > threshold {
        return Err(Error::ThresholdExceeded { measured: n, threshold });
    }
    Ok(GeneratedMap { s })
}

/// Largest `|i(z - phi(z)) - grad S((z + phi(z))/2)|` over `points`.
pub fn genfun_residual(map: &dyn SymplecticMap, s: &dyn GeneratingFunction, points: &[Vec<f64>]) -> Result<f64> {
    let mut worst = 0.0f64;
    for z in points {
        let y = map.apply(z)?;
        let mid: Vec<f64> = z.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
        let lhs = mul_i(&axpy(-1.0, &y, z));
        let g = s.gradient(&mid)?;
        worst = worst.max(norm(&axpy(-1.0, &g, &lhs)));
    }
    Ok(worst)
}

/// Generating function of `phi_H^t`, read off a single trajectory:
/// `S((z + y)/2) = <iz, y>/2 - (int lambda_hat_0 + int H dt)` with `y = phi_H^t(z)`.
#[derive(Clone)]
pub struct FlowGenerated {
    pub h: Arc<dyn TimePeriodicHamiltonian>,
    pub t: f64,
    pub cfg: IntegratorConfig,
}

impl FlowGenerated {
    /// `(S(x), grad S(x))`.
    pub fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, W)> {
        let map = HamiltonianTimeMap { h: self.h.clone(), t: self.t, cfg: self.cfg };
        let (z, _) = midpoint_preimage(&map, x)?;
        let f = disk_flow(&*self.h, self.t, &[z[0], z[1]], &self.cfg)?;
        let y = f.point;
        let iz = [-z[1], z[0]];
        let s = 0.5 * (iz[0] * y[0] + iz[1] * y[1]) - f.action();
        Ok((s, [-(z[1] - y[1]), z[0] - y[0]]))
    }
}

impl GeneratingFunction for FlowGenerated {
    fn m(&self) -> usize {
        1
    }
    fn value(&self, z: &[f64]) -> Result<f64> {
        Ok(self.value_and_gradient(z)?.0)
    }
    fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.value_and_gradient(z)?.1.to_vec())
    }
    fn support_radius(&self) -> f64 {
        self.h.support_radius()
    }
}

/// A path `t -> S_t` of generating functions.
pub type GeneratingFamily<'a> = &'a dyn Fn(f64) -> Arc<dyn GeneratingFunction>;

/// `max |d/dt S_t(z) + H(t, z + (i/2) grad S_t(z))|` over `times x points`,
/// the time derivative by a fourth-order difference with step `dt`.
pub fn hj_residual(
    family: GeneratingFamily<'_>,
    h: &dyn Fn(f64, &[f64]) -> f64,
    times: &[f64],
    points: &[Vec<f64>],
    dt: f64,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for &t in times {
        let s = [family(t - 2.0 * dt), family(t - dt), family(t + dt), family(t + 2.0 * dt)];
        let s0 = family(t);
        for z in points {
            let v: Vec<f64> = s.iter().map(|f| f.value(z)).collect::<Result<_>>()?;
            let dsdt = (v[0] - 8.0 * v[1] + 8.0 * v[2] - v[3]) / (12.0 * dt);
            let g = s0.gradient(z)?;
            let arg = axpy(0.5, &mul_i(&g), z);
            worst = worst.max((dsdt + h(t, &arg)).abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FlattenConfig {
    /// Upper bound on the sampled `C^2` norm of `H`.
    pub c2_threshold: f64,
    /// Width of the plateaus of `eta` near `t = 0` and `t = 1`.
    pub eta_margin: f64,
    pub integrator: IntegratorConfig,
}

impl Default for FlattenConfig {
    fn default() -> Self {
        FlattenConfig { c2_threshold: 1.0, eta_margin: 0.05, integrator: IntegratorConfig::adaptive(1e-12) }
    }
}

/// The family `lambda -> H^lambda` built from the interpolation
/// `S^lambda_t = (1 - lambda) S^0_t + lambda S^1_t`, where
/// `S^1_t = chi eta(t) S^0_1 + (1 - chi) S^0_t` with a radial cutoff `chi`
/// equal to 1 on `B_{r/3}` and 0 outside `B_{2r/3}`.
pub struct Flattened {
    /// The Hamiltonian being flattened (the reparametrized one when `H`
    /// does not vanish near `t = 0`).
    pub inner: Arc<dyn TimePeriodicHamiltonian>,
    pub original: Arc<dyn TimePeriodicHamiltonian>,
    pub r: f64,
    pub eps: f64,
    pub cfg: FlattenConfig,
    /// True when the time-reparametrization reduction was used.
    pub reparametrized: bool,
}

impl Flattened {
    fn chi(&self, z: &W) -> (f64, f64) {
        let rr = (z[0] * z[0] + z[1] * z[1]).sqrt();
        let x = (rr - self.r / 3.0) / (self.r / 3.0);
        (1.0 - smoothstep(x), -smoothstep_deriv(x) * 3.0 / self.r)
    }

    fn s0(&self, t: f64, z: &W) -> Result<(f64, W)> {
        if t <= 0.0 {
            return Ok((0.0, [0.0; 2]));
        }
        FlowGenerated { h: self.inner.clone(), t, cfg: self.cfg.integrator }.value_and_gradient(z)
    }

    /// `(S^lambda_t(z), grad S^lambda_t(z), d/dt S^lambda_t(z))`.
    fn s_lambda(&self, lambda: f64, t: f64, z: &W) -> Result<(f64, W, f64)> {
        let (st, gt) = self.s0(t, z)?;
        let (s1, g1) = self.s0(1.0, z)?;
        let (chi, dchi) = self.chi(z);
        let (eta, deta) = plateau_eta(t, self.cfg.eta_margin);
        let rr = (z[0] * z[0] + z[1] * z[1]).sqrt();
        let radial = if rr > 0.0 { [z[0] / rr, z[1] / rr] } else { [0.0; 2] };
        let v1 = chi * eta * s1 + (1.0 - chi) * st;
        let mut g1v = [0.0; 2];
        for k in 0..2 {
            g1v[k] = dchi * (eta * s1 - st) * radial[k] + chi * eta * g1[k] + (1.0 - chi) * gt[k];
        }
        // d/dt S^0_t from the Hamilton-Jacobi equation.
        let dst = -self.inner.value(t, &[z[0] - 0.5 * gt[1], z[1] + 0.5 * gt[0]]);
        let ds1 = chi * deta * s1 + (1.0 - chi) * dst;
        let v = (1.0 - lambda) * st + lambda * v1;
        let g = [(1.0 - lambda) * gt[0] + lambda * g1v[0], (1.0 - lambda) * gt[1] + lambda * g1v[1]];
        Ok((v, g, (1.0 - lambda) * dst + lambda * ds1))
    }

    /// `H^lambda(t, w) = -d/dt S^lambda_t(z)` where `w = z + (i/2) grad S^lambda_t(z)`.
    pub fn value(&self, lambda: f64, t: f64, w: &W) -> Result<f64> {
        let t = t - t.floor();
        if self.reparametrized {
            let reparam = |l: f64| Reparametrized { h: self.original.clone(), lambda: l, margin: self.cfg.eta_margin };
            if lambda <= 0.5 {
                let (e, _) = plateau_eta(2.0 * lambda, 0.0);
                return Ok(reparam(e).value(t, w));
            }
            return self.flat_value(plateau_eta(2.0 * lambda - 1.0, 0.0).0, t, w);
        }
        self.flat_value(lambda, t, w)
    }

    fn flat_value(&self, lambda: f64, t: f64, w: &W) -> Result<f64> {
        if lambda == 0.0 || self.inner.support_radius() == 0.0 {
            return Ok(self.inner.value(t, w));
        }
        let rr2 = w[0] * w[0] + w[1] * w[1];
        if rr2 >= self.r * self.r {
            return Ok(self.inner.value(t, w));
        }
        // Invert theta_t(z) = z + (i/2) grad S^lambda_t(z) by Newton's method.
        let theta = |z: &W| -> Result<(W, f64)> {
            let (_, g, ds) = self.s_lambda(lambda, t, z)?;
            Ok(([z[0] - 0.5 * g[1], z[1] + 0.5 * g[0]], ds))
        };
        let mut z = *w;
        let h = 1e-6;
        for _ in 0..30 {
            let (tz, ds) = theta(&z)?;
            let r = [tz[0] - w[0], tz[1] - w[1]];
            if (r[0] * r[0] + r[1] * r[1]).sqrt() < 1e-14 {
                return Ok(-ds);
            }
            let mut j = [0.0; 4];
            for c in 0..2 {
                let mut p = z;
                let mut q = z;
                p[c] += h;
                q[c] -= h;
                let (tp, tq) = (theta(&p)?.0, theta(&q)?.0);
                j[c] = (tp[0] - tq[0]) / (2.0 * h);
                j[2 + c] = (tp[1] - tq[1]) / (2.0 * h);
            }
            let det = j[0] * j[3] - j[1] * j[2];
            if det.abs() < 1e-8 {
                return Err(Error::NotNearIdentity("theta_t is not invertible".into()));
            }
            z[0] -= (j[3] * r[0] - j[1] * r[1]) / det;
            z[1] -= (-j[2] * r[0] + j[0] * r[1]) / det;
        }
        let (_, ds) = theta(&z)?;
        Ok(-ds)
    }

    pub fn member(self: &Arc<Self>, lambda: f64) -> Arc<dyn TimePeriodicHamiltonian> {
        Arc::new(FlattenedMember { parent: self.clone(), lambda })
    }
}

/// `H^lambda` for fixed `lambda`; `NaN` where the construction breaks down.
pub struct FlattenedMember {
    pub parent: Arc<Flattened>,
    pub lambda: f64,
}

impl TimePeriodicHamiltonian for FlattenedMember {
    fn value(&self, t: f64, w: &W) -> f64 {
        self.parent.value(self.lambda, t, w).unwrap_or(f64::NAN)
    }
    fn support_radius(&self) -> f64 {
        self.parent.original.support_radius()
    }
}

fn vanishes_near_zero(h: &dyn TimePeriodicHamiltonian, margin: f64) -> bool {
    let r = h.support_radius();
    let pts = disk_grid(r.max(1e-3), 7);
    [0.0, 0.25 * margin, 0.5 * margin, 1.0 - 0.5 * margin, 1.0 - 0.25 * margin]
        .iter()
        .all(|&t| pts.iter().all(|p| h.value(t, &[p[0], p[1]]) == 0.0))
}

/// Builds the flattening family of `H` on `B_r` with tolerance `eps`.
/// Requires `0` to be a fixed point of `phi_H^1` with zero action and `H`
/// to be `C^2`-small; refuses otherwise, reporting the measured values.
pub fn flatten_near_fixed_point(
    h: Arc<dyn TimePeriodicHamiltonian>,
    r: f64,
    eps: f64,
    cfg: FlattenConfig,
) -> Result<Arc<Flattened>> {
    if !(r > 0.0 && r < 1.0 && eps > 0.0) {
        return Err(Error::Argument("need 0 < r < 1 and eps > 0".into()));
    }
    let f = disk_flow(&*h, 1.0, &[0.0, 0.0], &cfg.integrator)?;
    let gap = (f.point[0].powi(2) + f.point[1].powi(2)).sqrt();
    if gap > 1e-9 || f.action().abs() > 1e-9 {
        return Err(Error::Precondition(format!(
            "0 must be a fixed point of zero action: displacement {gap:e}, action {:e}",
            f.action()
        )));
    }
    let mut c2 = 0.0f64;
    let step = 1e-4;
    for p in disk_grid(h.support_radius().max(1e-3), 9) {
        for t in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let w = [p[0], p[1]];
            c2 = c2.max(h.value(t, &w).abs());
            let g = h.gradient(t, &w);
            c2 = c2.max(g[0].abs()).max(g[1].abs());
            for k in 0..2 {
                let mut a = w;
                let mut b = w;
                a[k] += step;
                b[k] -= step;
                let (ga, gb) = (h.gradient(t, &a), h.gradient(t, &b));
                c2 = c2.max(((ga[0] - gb[0]) / (2.0 * step)).abs()).max(((ga[1] - gb[1]) / (2.0 * step)).abs());
            }
        }
    }
    if c2 > cfg.c2_threshold {
        return Err(Error::ThresholdExceeded { measured: c2, threshold: cfg.c2_threshold });
    }
    let quiet = vanishes_near_zero(&*h, cfg.eta_margin);
    let inner: Arc<dyn TimePeriodicHamiltonian> = if quiet {
        h.clone()
    } else {
        Arc::new(Reparametrized { h: h.clone(), lambda: 1.0, margin: cfg.eta_margin })
    };
    Ok(Arc::new(Flattened { inner, original: h, r, eps, cfg, reparametrized: !quiet }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FlattenReport {
    /// `max |H^0 - H|`.
    pub check_i: f64,
    /// `max |H^lambda - H|` outside `B_r`.
    pub check_ii: f64,
    /// `max |phi^1_{H^lambda} - phi^1_H|`.
    pub check_iii: f64,
    /// `max |H^lambda|`.
    pub check_iv: f64,
    /// `max |H^1(t, z)| - eps |z|^2`.
    pub check_v: f64,
    pub passed: bool,
}

/// Checks (i)-(v) of the flattening on a grid; `time1_points` are used for (iii).
pub fn verify_flattening(
    fl: &Arc<Flattened>,
    lambdas: &[f64],
    grid: &[Vec<f64>],
    times: &[f64],
    time1_points: &[W],
) -> Result<FlattenReport> {
    let h = &fl.original;
    let mut rep = FlattenReport { check_i: 0.0, check_ii: 0.0, check_iii: 0.0, check_iv: 0.0, check_v: f64::NEG_INFINITY, passed: false };
    for p in grid {
        let w = [p[0], p[1]];
        let r2 = w[0] * w[0] + w[1] * w[1];
        for &t in times {
            let h0 = h.value(t, &w);
            rep.check_i = rep.check_i.max((fl.value(0.0, t, &w)? - h0).abs());
            for &l in lambdas {
                let v = fl.value(l, t, &w)?;
                rep.check_iv = rep.check_iv.max(v.abs());
                if r2 >= fl.r * fl.r {
                    rep.check_ii = rep.check_ii.max((v - h0).abs());
                }
            }
            let v1 = fl.value(1.0, t, &w)?;
            rep.check_v = rep.check_v.max(v1.abs() - fl.eps * r2);
        }
    }
    let cfg = fl.cfg.integrator;
    for &l in lambdas {
        let member = fl.member(l);
        for w in time1_points {
            let a = crate::lift::disk_flow_integrated(&*member, 0.0, 1.0, w, &cfg)?.point;
            let b = disk_flow_between(&**h, 0.0, 1.0, w, &cfg)?.point;
            rep.check_iii = rep.check_iii.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
        }
    }
    rep.passed = rep.check_i < 1e-9
        && rep.check_ii < 1e-9
        && rep.check_iii < 1e-7
        && rep.check_iv < fl.eps
        && rep.check_v <= 1e-12;
    Ok(rep)
}

/// `tan(theta/2)`, the coefficient of the generating function of a rotation by `theta`.
pub fn rotation_coefficient(theta: f64) -> f64 {
    (0.5 * theta).tan()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lift::{BumpProfile, BumpSum, Bump, WindowedRadial, ZeroHamiltonian};

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::adaptive(1e-12)
    }

    #[test]
    fn rotation_generating_function() {
        let map: Arc<dyn SymplecticMap> = Arc::new(Rotation { theta: 0.1 });
        let s = generating_function_with_base(map.clone(), vec![0.0, 0.0], 0.0).unwrap();
        let c = rotation_coefficient(0.1);
        for p in disk_grid(0.8, 6) {
            assert!((s.value(&p).unwrap() - c * dot(&p, &p)).abs() < 1e-13);
        }
        assert!(genfun_residual(&*map, &Quadratic { c, m: 1 }, &disk_grid(0.8, 10)).unwrap() < 1e-14);
        let back = GeneratedMap { s: Arc::new(Quadratic { c: rotation_coefficient(0.1), m: 1 }) };
        let y = back.apply(&[0.3, 0.4]).unwrap();
        let e = map.apply(&[0.3, 0.4]).unwrap();
        assert!(norm(&axpy(-1.0, &y, &e)) < 1e-14);
    }

    #[test]
    fn identity_has_zero_generating_function() {
        let map: Arc<dyn SymplecticMap> =
            Arc::new(HamiltonianTimeMap { h: Arc::new(ZeroHamiltonian), t: 1.0, cfg: cfg() });
        let s = generating_function_with_base(map, vec![0.9, 0.0], 0.0).unwrap();
        assert_eq!(s.value(&[0.3, 0.1]).unwrap(), 0.0);
    }

    fn bumps() -> Arc<dyn TimePeriodicHamiltonian> {
        Arc::new(BumpSum {
            bumps: vec![Bump { center: [0.1, 0.0], radius: 0.5, amplitude: 0.03, modulation: 0.5, freq: 1, phase: 0.2 }],
        })
    }

    #[test]
    fn flow_formula_matches_path_integral() {
        let h = bumps();
        let map: Arc<dyn SymplecticMap> = Arc::new(HamiltonianTimeMap { h: h.clone(), t: 1.0, cfg: cfg() });
        let rec = generating_function_of(map.clone()).unwrap();
        let fg = FlowGenerated { h, t: 1.0, cfg: cfg() };
        for p in [vec![0.1, 0.2], vec![-0.2, 0.05], vec![0.3, -0.3]] {
            let a = rec.value(&p).unwrap();
            let b = fg.value(&p).unwrap();
            assert!((a - b).abs() < 1e-10, "{a} {b}");
            let c = rec.value_via(&p, &[0.0, 0.7]).unwrap();
            assert!((a - c).abs() < 1e-9, "{a} {c}");
        }
        assert!(genfun_residual(&*map, &rec, &disk_grid(0.6, 5)).unwrap() < 1e-12);
    }

    #[test]
    fn roundtrip_map_of_generating_function() {
        let h = bumps();
        let map: Arc<dyn SymplecticMap> = Arc::new(HamiltonianTimeMap { h, t: 1.0, cfg: cfg() });
        let s: Arc<dyn GeneratingFunction> = Arc::new(generating_function_of(map.clone()).unwrap());
        let back = map_of_generating_function(s, &[vec![0.1, 0.1]], 1.0).unwrap();
        for z in [[0.2, 0.1], [-0.1, 0.3]] {
            let a = back.apply(&z).unwrap();
            let b = map.apply(&z).unwrap();
            assert!(norm(&axpy(-1.0, &a, &b)) < 1e-10);
        }
        let big = Arc::new(Quadratic { c: 5.0, m: 1 });
        assert!(matches!(map_of_generating_function(big, &[vec![0.1, 0.1]], 1.0), Err(Error::ThresholdExceeded { .. })));
    }

    #[test]
    fn action_is_minus_s_at_fixed_points() {
        let h: Arc<dyn TimePeriodicHamiltonian> =
            Arc::new(WindowedRadial { profile: BumpProfile { height: 0.05, rho_support: 0.5 }, margin: 0.1 });
        let fg = FlowGenerated { h: h.clone(), t: 1.0, cfg: cfg() };
        let a = disk_flow(&*h, 1.0, &[0.0, 0.0], &cfg()).unwrap().action();
        assert!((fg.value(&[0.0, 0.0]).unwrap() + a).abs() < 1e-12);
    }

    #[test]
    fn hamilton_jacobi_for_rotations_and_flows() {
        let theta = 0.3;
        let fam = |t: f64| Arc::new(Quadratic { c: rotation_coefficient(theta * t), m: 1 }) as Arc<dyn GeneratingFunction>;
        let hr = |_t: f64, z: &[f64]| -0.5 * theta * dot(z, z);
        let r = hj_residual(&fam, &hr, &[0.2, 0.5, 0.8], &disk_grid(0.9, 5), 1e-3).unwrap();
        assert!(r < 1e-9, "{r}");
        let h = bumps();
        let h2 = h.clone();
        let fam = move |t: f64| Arc::new(FlowGenerated { h: h2.clone(), t, cfg: cfg() }) as Arc<dyn GeneratingFunction>;
        let hf = |t: f64, z: &[f64]| h.value(t, &[z[0], z[1]]);
        let r = hj_residual(&fam, &hf, &[0.3, 0.6], &disk_grid(0.5, 3), 1e-2).unwrap();
        assert!(r < 1e-6, "{r}");
    }

    #[test]
    fn flattening_windowed_radial() {
        let h: Arc<dyn TimePeriodicHamiltonian> = Arc::new(WindowedRadial {
            profile: crate::lift::QuadraticBumpProfile { slope: 0.01, rho_support: 0.3 },
            margin: 0.1,
        });
        let fl = flatten_near_fixed_point(h, 0.6, 0.05, FlattenConfig::default()).unwrap();
        assert!(!fl.reparametrized);
        let rep = verify_flattening(
            &fl,
            &[0.0, 0.25, 0.5, 0.75, 1.0],
            &disk_grid(0.8, 9),
            &[0.0, 0.05, 0.3, 0.5, 0.97],
            &[[0.1, 0.05], [0.3, -0.2]],
        )
        .unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn zero_family_is_zero() {
        let fl = flatten_near_fixed_point(Arc::new(ZeroHamiltonian), 0.5, 0.05, FlattenConfig::default()).unwrap();
        assert_eq!(fl.value(0.7, 0.3, &[0.1, 0.1]).unwrap(), 0.0);
    }
}
