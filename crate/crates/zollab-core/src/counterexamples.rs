//! Domains `C^1`-close to the ball whose lower capacity is strictly below
//! their systole: `H = F # G` with non-negative fixed-point actions and
//! negative Calabi invariant, its rescalings `H^lambda`, and the analogous
//! contact model on `T x B`.
use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::lift::{
    calabi, characteristic_from_periodic_point, check_admissible, calabi_rule, disk_flow, lambda_hat,
    hamiltonian_field, CharacteristicCertificate, DiskFlow, LiftedDomain, RadialProfile, TimePeriodicHamiltonian, W,
};
use crate::numerics::linalg::lm_step;
use crate::numerics::s3::{self, P4};
use crate::numerics::{bump, bump_deriv, gauss_legendre, smoothstep, DiskRule, IntegratorConfig, SphereGrid};

fn gl_integral<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let (x, w) = gauss_legendre(16);
    let h = (b - a) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            s += 0.5 * h * wi * f(lo + 0.5 * h * (xi + 1.0));
        }
    }
    s
}

/// Decreasing profile with `f' = -pi/2` on `[0, 1/4]`, capped smoothly to
/// zero on `[1/4, rho_supp]`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CappedLinearProfile {
    pub rho_supp: f64,
}

impl CappedLinearProfile {
    fn width(&self) -> f64 {
        self.rho_supp - 0.25
    }

    /// `rho_0` with `f(rho) = (pi/2)(rho_0 - rho)` on `[0, 1/4]`.
    pub fn rho0(&self) -> f64 {
        0.25 + 0.5 * self.width()
    }
}

impl RadialProfile for CappedLinearProfile {
    fn f(&self, rho: f64) -> f64 {
        if rho >= self.rho_supp {
            return 0.0;
        }
        if rho <= 0.25 {
            return 0.5 * PI * (self.rho0() - rho);
        }
        let x = (rho - 0.25) / self.width();
        // int_x^1 (1 - s(u)) du = int_0^{1-x} s(v) dv
        0.5 * PI * self.width() * gl_integral(smoothstep, 0.0, 1.0 - x, 4)
    }
    fn df(&self, rho: f64) -> f64 {
        -0.5 * PI * (1.0 - smoothstep((rho - 0.25) / self.width()))
    }
    fn support(&self) -> f64 {
        self.rho_supp
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CounterexampleConfig {
    pub rho_supp: f64,
    /// Center and radius of the disk `U` displaced by `phi_F^1`.
    pub u_center: W,
    pub u_radius: f64,
    pub calabi_margin: f64,
    /// Periods `k <= census_k_max` enter the closed-characteristic census.
    pub census_k_max: usize,
    /// Side of the square seed grid of the census.
    pub census_grid: usize,
    pub lambdas: Vec<f64>,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        CounterexampleConfig {
            rho_supp: 0.3,
            u_center: [0.25, 0.0],
            u_radius: 0.2,
            calabi_margin: 0.02,
            census_k_max: 8,
            census_grid: 120,
            lambdas: vec![0.05, 0.1, 0.15, 0.2, 0.25],
        }
    }
}

/// `H(t, w) = F(w) + G(e^{2i f'(|w|^2) t} w)` with `F = f(|w|^2)` and
/// `G = -c_G bump(|w - w_0|^2 / r_U^2)`; its flow is `phi_F^t o phi_G^t`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FSharpG {
    pub f: CappedLinearProfile,
    pub w0: W,
    pub r_u: f64,
    pub c_g: f64,
}

impl FSharpG {
    fn g(&self, s: f64) -> f64 {
        -self.c_g * bump(s / (self.r_u * self.r_u))
    }

    fn dg(&self, s: f64) -> f64 {
        let r2 = self.r_u * self.r_u;
        -self.c_g * bump_deriv(s / r2) / r2
    }

    pub fn big_g(&self, w: &W) -> f64 {
        self.g((w[0] - self.w0[0]).powi(2) + (w[1] - self.w0[1]).powi(2))
    }

    fn rotate(w: &W, th: f64) -> W {
        let (s, c) = th.sin_cos();
        [c * w[0] - s * w[1], s * w[0] + c * w[1]]
    }

    /// `phi_F^t` with its action accumulators.
    pub fn flow_f(&self, t: f64, w: &W) -> DiskFlow {
        let rho = w[0] * w[0] + w[1] * w[1];
        let th = -2.0 * self.f.df(rho) * t;
        DiskFlow { point: Self::rotate(w, th), lambda_integral: 0.5 * rho * th, h_integral: t * self.f.f(rho) }
    }

    /// `phi_G^t` with its action accumulators.
    pub fn flow_g(&self, t: f64, w: &W) -> DiskFlow {
        let u = [w[0] - self.w0[0], w[1] - self.w0[1]];
        let s = u[0] * u[0] + u[1] * u[1];
        let th = -2.0 * self.dg(s) * t;
        let v = Self::rotate(&u, th);
        let iw0 = [-self.w0[1], self.w0[0]];
        let lam = 0.5 * (iw0[0] * (v[0] - u[0]) + iw0[1] * (v[1] - u[1])) + 0.5 * s * th;
        DiskFlow { point: [v[0] + self.w0[0], v[1] + self.w0[1]], lambda_integral: lam, h_integral: t * self.g(s) }
    }
}

impl TimePeriodicHamiltonian for FSharpG {
    fn value(&self, t: f64, w: &W) -> f64 {
        let rho = w[0] * w[0] + w[1] * w[1];
        let back = Self::rotate(w, 2.0 * self.f.df(rho) * t);
        self.f.f(rho) + self.big_g(&back)
    }
    fn support_radius(&self) -> f64 {
        self.f.rho_supp.sqrt()
    }
    /// Accumulators are those of the concatenated path `phi_G` then `phi_F`,
    /// which has the same action function as the flow of `H`.
    fn exact_flow(&self, t0: f64, t1: f64, w: &W) -> Option<DiskFlow> {
        if t0 != 0.0 {
            return None;
        }
        let a = self.flow_g(t1, w);
        let b = self.flow_f(t1, &a.point);
        Some(DiskFlow {
            point: b.point,
            lambda_integral: a.lambda_integral + b.lambda_integral,
            h_integral: a.h_integral + b.h_integral,
        })
    }
}

/// `H^lambda(t, w) = lambda^2 H(t, w / lambda)`.
#[derive(Clone)]
pub struct Rescaled {
    pub h: Arc<dyn TimePeriodicHamiltonian>,
    pub lambda: f64,
}

impl TimePeriodicHamiltonian for Rescaled {
    fn value(&self, t: f64, w: &W) -> f64 {
        let l = self.lambda;
        l * l * self.h.value(t, &[w[0] / l, w[1] / l])
    }
    fn support_radius(&self) -> f64 {
        self.lambda * self.h.support_radius()
    }
    fn gradient(&self, t: f64, w: &W) -> W {
        let l = self.lambda;
        let g = self.h.gradient(t, &[w[0] / l, w[1] / l]);
        [l * g[0], l * g[1]]
    }
    fn dt(&self, t: f64, w: &W) -> f64 {
        let l = self.lambda;
        l * l * self.h.dt(t, &[w[0] / l, w[1] / l])
    }
    fn exact_flow(&self, t0: f64, t1: f64, w: &W) -> Option<DiskFlow> {
        let l = self.lambda;
        let f = self.h.exact_flow(t0, t1, &[w[0] / l, w[1] / l])?;
        Some(DiskFlow {
            point: [l * f.point[0], l * f.point[1]],
            lambda_integral: l * l * f.lambda_integral,
            h_integral: l * l * f.h_integral,
        })
    }
}

pub fn rescale(h: Arc<dyn TimePeriodicHamiltonian>, lambda: f64) -> Result<Rescaled> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::Argument(format!("lambda = {lambda} is not in (0, 1]")));
    }
    Ok(Rescaled { h, lambda })
}

/// A `k`-periodic point of `phi_H^1` with the action `A_{phi^k}(w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PeriodicPoint {
    pub w: W,
    pub k: usize,
    pub action: f64,
    pub residual: f64,
}

fn dist(a: &W, b: &W) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Polishes `w` towards a solution of `phi^k(w) = w` by Levenberg–Marquardt.
fn polish(h: &dyn TimePeriodicHamiltonian, k: usize, w: &W, cfg: &IntegratorConfig) -> Option<(W, f64)> {
    let map = |p: &W| disk_flow(h, k as f64, p, cfg).ok().map(|f| f.point);
    let mut w = *w;
    let step = 1e-7;
    for _ in 0..40 {
        let y = map(&w)?;
        let r = [y[0] - w[0], y[1] - w[1]];
        let rn = (r[0] * r[0] + r[1] * r[1]).sqrt();
        if rn < 1e-12 {
            return Some((w, rn));
        }
        let mut j = [0.0; 4];
        for c in 0..2 {
            let mut a = w;
            let mut b = w;
            a[c] += step;
            b[c] -= step;
            let (ya, yb) = (map(&a)?, map(&b)?);
            for row in 0..2 {
                j[row * 2 + c] = (ya[row] - yb[row]) / (2.0 * step) - if row == c { 1.0 } else { 0.0 };
            }
        }
        let dx = lm_step(&j, &r, 2, 2, 1e-14).ok()?;
        let n = (dx[0] * dx[0] + dx[1] * dx[1]).sqrt();
        let scale = if n > 0.05 { 0.05 / n } else { 1.0 };
        w = [w[0] + scale * dx[0], w[1] + scale * dx[1]];
        if !(w[0] * w[0] + w[1] * w[1] < 1.0) {
            return None;
        }
    }
    let y = map(&w)?;
    let rn = dist(&y, &w);
    (rn < 1e-10).then_some((w, rn))
}

/// Periodic points of `phi_H^1` with period `k <= k_max`, seeded from an
/// `n x n` grid on the disk of radius `radius` and polished; points already
/// periodic on the grid (including continua) are kept as they are.
pub fn periodic_census(
    h: &dyn TimePeriodicHamiltonian,
    k_max: usize,
    n: usize,
    radius: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<PeriodicPoint>> {
    let mut out = Vec::new();
    let seeds: Vec<W> = crate::genfun::disk_grid(radius, n).into_iter().map(|p| [p[0], p[1]]).collect();
    let seed_tol = 4.0 * radius / n as f64;
    for k in 1..=k_max {
        for w in &seeds {
            let f = disk_flow(h, k as f64, w, cfg)?;
            let d = dist(&f.point, w);
            if d < 1e-12 {
                out.push(PeriodicPoint { w: *w, k, action: f.action(), residual: d });
            } else if d < seed_tol {
                if let Some((p, res)) = polish(h, k, w, cfg) {
                    let a = disk_flow(h, k as f64, &p, cfg)?.action();
                    out.push(PeriodicPoint { w: p, k, action: a, residual: res });
                }
            }
        }
    }
    // iterates of a k-periodic point are jk-periodic with j times the action
    let base_len = out.len();
    for i in 0..base_len {
        let p = out[i];
        for j in 2..=k_max / p.k {
            out.push(PeriodicPoint { k: j * p.k, action: j as f64 * p.action, ..p });
        }
    }
    Ok(out)
}

/// `c = sup |lambda_hat_0(X_H)| + sup |H|` sampled on `n x n` disk points
/// and 16 times, so that `|A_{phi^k}(w)| <= k c`.
pub fn higher_period_constant(h: &dyn TimePeriodicHamiltonian, n: usize) -> f64 {
    let pts = crate::genfun::disk_grid(h.support_radius(), n);
    let (mut a, mut b) = (0.0f64, 0.0f64);
    for j in 0..16 {
        let t = j as f64 / 16.0;
        for p in &pts {
            let w = [p[0], p[1]];
            a = a.max(lambda_hat(&w, &hamiltonian_field(h, t, &w)).abs());
            b = b.max(h.value(t, &w).abs());
        }
    }
    a + b
}

/// The assembled Hamiltonian with the measured data behind it.
#[derive(Clone)]
pub struct Counterexample {
    pub cfg: CounterexampleConfig,
    pub h: Arc<FSharpG>,
    pub cal_f: f64,
    pub cal_g: f64,
    pub cal_h: f64,
    /// `min dist(phi_F^1(U), U)` over a sample of `U`.
    pub displacement_margin: f64,
    /// Census of `phi_H^1` (scales to any `H^lambda`).
    pub census: Vec<PeriodicPoint>,
    pub higher_period_c: f64,
    /// Largest `lambda` for which `lambda^2 c <= pi/2` and `H^lambda` is admissible.
    pub lambda_max: f64,
}

impl core::fmt::Debug for Counterexample {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Counterexample")
            .field("h", &self.h)
            .field("cal_h", &self.cal_h)
            .field("lambda_max", &self.lambda_max)
            .finish()
    }
}

impl Counterexample {
    pub fn rescaled(&self, lambda: f64) -> Result<Rescaled> {
        rescale(self.h.clone(), lambda)
    }

    /// Smallest `k pi + lambda^2 A` over the census, with `pi` from the
    /// fixed points outside the support.
    pub fn census_systole(&self, lambda: f64, unit: f64) -> f64 {
        self.census
            .iter()
            .map(|p| p.k as f64 * unit + lambda * lambda * p.action)
            .fold(unit, f64::min)
    }
}

/// `int_0^1 bump(s) ds`.
fn bump_mass() -> f64 {
    gl_integral(bump, 0.0, 1.0, 8)
}

/// Builds `H = F # G` from `cfg` and checks its defining properties.
pub fn build_counterexample_hamiltonian(cfg: &CounterexampleConfig) -> Result<Counterexample> {
    if !(cfg.rho_supp > 0.25 && cfg.rho_supp < 1.0) {
        return Err(Error::Configuration(format!("rho_supp = {} must lie in (1/4, 1)", cfg.rho_supp)));
    }
    let reach = (cfg.u_center[0].powi(2) + cfg.u_center[1].powi(2)).sqrt() + cfg.u_radius;
    if !(reach < 0.5 && cfg.u_radius > 0.0) {
        return Err(Error::Configuration(format!("U reaches radius {reach}, not inside the ball of radius 1/2")));
    }
    if !(cfg.calabi_margin > 0.0) || cfg.census_k_max == 0 {
        return Err(Error::Configuration("calabi_margin and census_k_max must be positive".into()));
    }
    let f = CappedLinearProfile { rho_supp: cfg.rho_supp };
    let cal_f = PI * gl_integral(|r| f.f(r), 0.0, 0.25, 2) + PI * gl_integral(|r| f.f(r), 0.25, cfg.rho_supp, 16);
    let unit_g = PI * cfg.u_radius * cfg.u_radius * bump_mass();
    let c_g = (cal_f + 2.0 * cfg.calabi_margin) / unit_g;
    let h = FSharpG { f, w0: cfg.u_center, r_u: cfg.u_radius, c_g };

    let mut margin = f64::INFINITY;
    for p in crate::genfun::disk_grid(cfg.u_radius, 24) {
        let w = [p[0] + cfg.u_center[0], p[1] + cfg.u_center[1]];
        margin = margin.min(dist(&h.flow_f(1.0, &w).point, &cfg.u_center) - cfg.u_radius);
    }
    if !(margin > 0.0) {
        return Err(Error::Configuration(format!("phi_F^1(U) meets U: margin {margin:e}")));
    }

    let cal_h = calabi(&h);
    let cal_g = -c_g * unit_g;
    if !(cal_g < -cal_f - cfg.calabi_margin) || !(cal_h < 0.0) {
        return Err(Error::Configuration(format!("Calabi condition fails: Cal(F) = {cal_f}, int G = {cal_g}, Cal(H) = {cal_h}")));
    }

    let icfg = IntegratorConfig::adaptive(1e-12);
    let radius = (1.15 * h.support_radius()).min(0.99);
    let census = periodic_census(&h, cfg.census_k_max, cfg.census_grid, radius, &icfg)?;
    for p in census.iter().filter(|p| p.k == 1) {
        let df = h.f.df(p.w[0] * p.w[0] + p.w[1] * p.w[1]);
        let moved = dist(&h.flow_f(1.0, &p.w).point, &p.w);
        if moved > 1e-7 && df != 0.0 {
            return Err(Error::Configuration(format!("phi_H^1 has a fixed point {:?} not fixed by phi_F^1", p.w)));
        }
        if p.action < -1e-9 {
            return Err(Error::Configuration(format!("fixed point {:?} has negative action {}", p.w, p.action)));
        }
    }
    let c = higher_period_constant(&h, 80);
    let mut lambda_max = (PI / (2.0 * c)).sqrt().min(1.0);
    let sup_h = crate::genfun::disk_grid(h.support_radius(), 60)
        .iter()
        .flat_map(|p| (0..8).map(move |j| (j as f64 / 8.0, [p[0], p[1]])))
        .map(|(t, w)| -h.value(t, &w))
        .fold(0.0f64, f64::max);
    if sup_h > 0.0 {
        // H^lambda > -pi (1 - |w|^2) needs lambda^2 sup(-H) < pi (1 - lambda^2 rho_supp)
        lambda_max = lambda_max.min((PI / (sup_h + PI * cfg.rho_supp)).sqrt() * 0.999);
    }
    Ok(Counterexample {
        cfg: cfg.clone(),
        h: Arc::new(h),
        cal_f,
        cal_g,
        cal_h,
        displacement_margin: margin,
        census,
        higher_period_c: c,
        lambda_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LambdaReport {
    pub lambda: f64,
    pub systole: f64,
    pub calabi: f64,
    pub volume: f64,
    /// Upper bound `sqrt(2 vol)` for the lower capacity.
    pub ball_capacity_bound: f64,
    pub strict: bool,
}

/// Per-`lambda` systole, volume and capacity bound of `A_lambda = D(H^lambda)`.
pub fn assemble_counterexample(ce: &Counterexample, lambdas: &[f64]) -> Result<Vec<LambdaReport>> {
    lambdas
        .iter()
        .map(|&l| {
            if !(l > 0.0 && l <= ce.lambda_max) {
                return Err(Error::Argument(format!(
                    "lambda = {l} is outside the validated range (0, {:.6}]",
                    ce.lambda_max
                )));
            }
            let hl = ce.rescaled(l)?;
            check_admissible(&hl, &calabi_rule(&hl))?;
            let systole = ce.census_systole(l, PI);
            let cal = l.powi(4) * ce.cal_h;
            let volume = 0.5 * PI * PI + cal;
            let bound = (2.0 * volume).sqrt();
            Ok(LambdaReport { lambda: l, systole, calabi: cal, volume, ball_capacity_bound: bound, strict: bound < systole })
        })
        .collect()
}

/// Independent check of the systole: integrates the characteristic of
/// `partial A_lambda` lifted from a fixed point outside the support.
pub fn certify_systole(ce: &Counterexample, lambda: f64) -> Result<CharacteristicCertificate> {
    let hl = ce.rescaled(lambda)?;
    let r = (0.5 * (1.0 + hl.support_radius())).min(0.9);
    characteristic_from_periodic_point(Arc::new(hl), &[r, 0.0], 1, &IntegratorConfig::adaptive(1e-12))
}

/// Sampled `C^0` and `C^1` distance from the radial function of `A_lambda`
/// to that of the unit ball.
pub fn ball_distance(ce: &Counterexample, lambda: f64, grid: &SphereGrid) -> Result<(f64, f64)> {
    let dom = LiftedDomain::new(Arc::new(ce.rescaled(lambda)?));
    let h = 1e-5;
    let (mut c0, mut c1) = (0.0f64, 0.0f64);
    for (z, _) in grid.nodes() {
        c0 = c0.max((dom.radius(&z) - 1.0).abs());
        for dir in [s3::mul_i(&z), [-z[2], z[3], z[0], -z[1]]] {
            let plus: P4 = s3::normalize(&core::array::from_fn(|k| z[k] + h * dir[k]));
            let minus: P4 = s3::normalize(&core::array::from_fn(|k| z[k] - h * dir[k]));
            c1 = c1.max(((dom.radius(&plus) - dom.radius(&minus)) / (2.0 * h)).abs());
        }
    }
    Ok((c0, c1.max(c0)))
}

/// The contact form `(1 + H^lambda) dt + lambda_hat_0` on `T x B`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ContactModel {
    pub lambda: f64,
    /// Least period `k + A_{phi^k}` over the census.
    pub systole: f64,
    /// `pi + 2 Cal(H^lambda)`.
    pub volume: f64,
    /// `int (1 + H - <w, grad H>/2) dt dx dy` by quadrature.
    pub volume_quadrature: f64,
    /// `sys^2 / vol`.
    pub ratio: f64,
    /// Ratio of the Zoll model, `1/pi`.
    pub baseline: f64,
}

pub fn contact_counterexample(ce: &Counterexample, lambda: f64, r: f64) -> Result<ContactModel> {
    if lambda == 0.0 {
        return Ok(ContactModel { lambda, systole: 1.0, volume: PI, volume_quadrature: PI, ratio: 1.0 / PI, baseline: 1.0 / PI });
    }
    let hl = ce.rescaled(lambda)?;
    if !(hl.support_radius() < r && r <= 1.0) {
        return Err(Error::Configuration(format!("support radius {} not inside B_{r}", hl.support_radius())));
    }
    if lambda * lambda * ce.higher_period_c > 0.5 {
        return Err(Error::Argument(format!("lambda = {lambda} outside the validated range of the contact model")));
    }
    let systole = ce.census_systole(lambda, 1.0);
    let volume = PI + 2.0 * lambda.powi(4) * ce.cal_h;
    let rule = crate::numerics::TorusDiskRule::new(32, DiskRule::new(hl.support_radius(), 96, 128));
    let volume_quadrature = PI
        + rule.integrate(|t, x, y| {
            let w = [x, y];
            let g = hl.gradient(t, &w);
            hl.value(t, &w) - 0.5 * (x * g[0] + y * g[1])
        });
    Ok(ContactModel { lambda, systole, volume, volume_quadrature, ratio: systole * systole / volume, baseline: 1.0 / PI })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lift::disk_flow_integrated;
    use std::sync::OnceLock;

    fn ce() -> &'static Counterexample {
        static CE: OnceLock<Counterexample> = OnceLock::new();
        CE.get_or_init(|| {
            let cfg = CounterexampleConfig { census_grid: 60, ..Default::default() };
            build_counterexample_hamiltonian(&cfg).unwrap()
        })
    }

    #[test]
    fn profile_shape() {
        let f = CappedLinearProfile { rho_supp: 0.3 };
        for k in 0..60 {
            let r = k as f64 * 0.006;
            let h = 1e-6;
            assert!(((f.f(r + h) - f.f(r - h)) / (2.0 * h) - f.df(r)).abs() < 1e-7, "{r}");
            assert!(f.df(r) <= 0.0);
        }
        assert!((f.df(0.2) + PI / 2.0).abs() < 1e-15);
        assert_eq!(f.f(0.3), 0.0);
        assert!(f.f(0.2999).abs() < 1e-12);
    }

    #[test]
    fn closed_form_flow_matches_integration() {
        let h = ce().h.clone();
        let cfg = IntegratorConfig::adaptive(1e-12);
        for w in [[0.1, 0.2], [0.3, -0.1], [0.05, 0.05], [-0.4, 0.3]] {
            for t in [0.37, 1.0, 2.0] {
                let a = h.exact_flow(0.0, t, &w).unwrap();
                let b = disk_flow_integrated(&*h, 0.0, t, &w, &cfg).unwrap();
                assert!(dist(&a.point, &b.point) < 1e-7, "{w:?} {t} {a:?} {b:?}");
                assert!((a.action() - b.action()).abs() < 1e-8, "{} {}", a.action(), b.action());
            }
        }
    }

    #[test]
    fn defining_properties() {
        let c = ce();
        assert!(c.displacement_margin > 0.0);
        assert!(c.cal_h < 0.0);
        assert!((c.cal_h - (c.cal_f + c.cal_g)).abs() < 1e-6, "{} {}", c.cal_h, c.cal_f + c.cal_g);
        let f = c.h.f;
        let rho0 = f.rho0();
        assert!((f.f(0.0) - 0.5 * PI * rho0).abs() < 1e-15);
        for p in c.census.iter().filter(|p| p.k == 1) {
            assert!(p.action >= -1e-9);
        }
        let origin = c.census.iter().find(|p| p.k == 1 && dist(&p.w, &[0.0, 0.0]) < 1e-6);
        assert!(origin.is_none() || (origin.unwrap().action - f.f(0.0)).abs() < 1e-9);
    }

    #[test]
    fn higher_period_bound() {
        let c = ce();
        let cfg = IntegratorConfig::adaptive(1e-12);
        for p in crate::genfun::disk_grid(0.55, 9) {
            for k in 1..=8 {
                let a = disk_flow(&*c.h, k as f64, &[p[0], p[1]], &cfg).unwrap().action();
                assert!(a.abs() / k as f64 <= c.higher_period_c);
            }
        }
    }

    #[test]
    fn rescaling_conjugates_flows() {
        let c = ce();
        let cfg = IntegratorConfig::adaptive(1e-12);
        let l = 0.2;
        let hl = c.rescaled(l).unwrap();
        for w in [[0.02, 0.05], [-0.06, 0.01], [0.15, 0.1]] {
            let a = disk_flow_integrated(&hl, 0.0, 1.0, &w, &cfg).unwrap();
            let b = disk_flow(&*c.h, 1.0, &[w[0] / l, w[1] / l], &cfg).unwrap();
            assert!(dist(&a.point, &[l * b.point[0], l * b.point[1]]) < 1e-8);
            assert!((a.action() - l * l * b.action()).abs() < 1e-9);
        }
        let one = c.rescaled(1.0).unwrap();
        assert_eq!(one.value(0.3, &[0.1, 0.2]), c.h.value(0.3, &[0.1, 0.2]));
        let cal = calabi(&hl);
        assert!((cal - l.powi(4) * c.cal_h).abs() < 1e-6 * l.powi(4), "{cal} {}", l.powi(4) * c.cal_h);
    }

    #[test]
    fn strict_inequality_on_validated_range() {
        let c = ce();
        let lambdas: Vec<f64> = (1..=5).map(|k| c.lambda_max * k as f64 / 5.0).collect();
        let reps = assemble_counterexample(c, &lambdas).unwrap();
        for r in &reps {
            assert!(r.systole >= PI - 1e-4);
            assert!(r.volume < 0.5 * PI * PI);
            assert!(r.strict);
        }
        assert!(assemble_counterexample(c, &[1.01 * c.lambda_max]).is_err());
    }

    #[test]
    fn contact_model_beats_zoll() {
        let c = ce();
        let zoll = contact_counterexample(c, 0.0, 0.9).unwrap();
        assert_eq!(zoll.ratio, zoll.baseline);
        let l = (0.5 / c.higher_period_c).sqrt();
        let m = contact_counterexample(c, l, 0.9).unwrap();
        assert!((m.systole - 1.0).abs() < 1e-12);
        assert!(m.ratio > m.baseline);
        assert!((m.volume - m.volume_quadrature).abs() < 1e-6, "{} {}", m.volume, m.volume_quadrature);
    }

    #[test]
    fn ball_distance_shrinks() {
        let c = ce();
        let grid = SphereGrid::new(6, 8, 8);
        let a = ball_distance(c, 0.1, &grid).unwrap();
        let b = ball_distance(c, 0.05, &grid).unwrap();
        assert!(b.0 < a.0 && b.1 < a.1);
    }
}
