//! Lifting Hamiltonian diffeomorphisms of the unit disk to domains `D(H)`
//! in `C^2`: the map `Phi`, Calabi invariant, volumes, closed characteristics
//! and the interpolation data for families with a common time-one map.
use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use crate::domains::{ContactAmplitude, ScalarField, StarShapedDomain};
use crate::error::{Error, Result};
use crate::numerics::s3::{self, P4};
use crate::numerics::{
    bisect, bump, bump_deriv, fd_step, find_closed_orbit, flow_endpoint, integrate_flow, smoothstep,
    smoothstep_deriv, AutonomousFlow, DiskRule, IntegratorConfig, OrbitSearch, SphereGrid, TorusDiskRule,
    Trajectory, VectorField,
};
use crate::reeb::reeb_field;

/// A point of the disk `C^1`.
pub type W = [f64; 2];

/// `H: T x B -> R`, 1-periodic in `t`, vanishing for `|w| >= support_radius`.
pub trait TimePeriodicHamiltonian: Send + Sync {
    fn value(&self, t: f64, w: &W) -> f64;
    fn support_radius(&self) -> f64;

    fn gradient(&self, t: f64, w: &W) -> W {
        let h = fd_step(1.0);
        let dx = (self.value(t, &[w[0] + h, w[1]]) - self.value(t, &[w[0] - h, w[1]])) / (2.0 * h);
        let dy = (self.value(t, &[w[0], w[1] + h]) - self.value(t, &[w[0], w[1] - h])) / (2.0 * h);
        [dx, dy]
    }

    fn dt(&self, t: f64, w: &W) -> f64 {
        let h = fd_step(1.0);
        (self.value(t + h, w) - self.value(t - h, w)) / (2.0 * h)
    }

    /// Closed-form flow from `t0` to `t1` with its accumulators, when known.
    fn exact_flow(&self, _t0: f64, _t1: f64, _w: &W) -> Option<DiskFlow> {
        None
    }
}

/// `X_H = -i grad H`.
pub fn hamiltonian_field(h: &dyn TimePeriodicHamiltonian, t: f64, w: &W) -> W {
    let g = h.gradient(t, w);
    [g[1], -g[0]]
}

/// `lambda_hat_0(w)(v) = <iw, v> / 2`.
pub fn lambda_hat(w: &W, v: &W) -> f64 {
    0.5 * (-w[1] * v[0] + w[0] * v[1])
}

pub struct ZeroHamiltonian;

impl TimePeriodicHamiltonian for ZeroHamiltonian {
    fn value(&self, _t: f64, _w: &W) -> f64 {
        0.0
    }
    fn support_radius(&self) -> f64 {
        0.0
    }
    fn gradient(&self, _t: f64, _w: &W) -> W {
        [0.0; 2]
    }
    fn dt(&self, _t: f64, _w: &W) -> f64 {
        0.0
    }
}

/// Profile `f(rho)` of a radial Hamiltonian `H(w) = f(|w|^2)`.
pub trait RadialProfile: Send + Sync {
    fn f(&self, rho: f64) -> f64;
    fn df(&self, rho: f64) -> f64;
    /// `f` vanishes for `rho >= support()`.
    fn support(&self) -> f64;
}

/// Autonomous radial Hamiltonian; its flow is `e^{-2i f'(|w|^2) t} w`.
#[derive(Debug, Clone)]
pub struct Radial<P>(pub P);

impl<P: RadialProfile> Radial<P> {
    pub fn exact_flow(&self, t: f64, w: &W) -> W {
        let th = -2.0 * self.0.df(w[0] * w[0] + w[1] * w[1]) * t;
        let (s, c) = th.sin_cos();
        [c * w[0] - s * w[1], s * w[0] + c * w[1]]
    }

    /// Action `f(rho) - rho f'(rho)` of a fixed point with `|w|^2 = rho`.
    pub fn fixed_point_action(&self, rho: f64) -> f64 {
        self.0.f(rho) - rho * self.0.df(rho)
    }
}

impl<P: RadialProfile> TimePeriodicHamiltonian for Radial<P> {
    fn value(&self, _t: f64, w: &W) -> f64 {
        self.0.f(w[0] * w[0] + w[1] * w[1])
    }
    fn support_radius(&self) -> f64 {
        self.0.support().sqrt()
    }
    fn gradient(&self, _t: f64, w: &W) -> W {
        let d = 2.0 * self.0.df(w[0] * w[0] + w[1] * w[1]);
        [d * w[0], d * w[1]]
    }
    fn dt(&self, _t: f64, _w: &W) -> f64 {
        0.0
    }
}

/// `f(rho) = c * bump(rho / rho_s)`.
#[derive(Debug, Clone, Copy)]
pub struct BumpProfile {
    pub height: f64,
    pub rho_support: f64,
}

impl RadialProfile for BumpProfile {
    fn f(&self, rho: f64) -> f64 {
        self.height * bump(rho / self.rho_support)
    }
    fn df(&self, rho: f64) -> f64 {
        self.height * bump_deriv(rho / self.rho_support) / self.rho_support
    }
    fn support(&self) -> f64 {
        self.rho_support
    }
}

/// `f(rho) = c * rho * bump(rho / rho_s)`; vanishes to second order at the origin.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticBumpProfile {
    pub slope: f64,
    pub rho_support: f64,
}

impl RadialProfile for QuadraticBumpProfile {
    fn f(&self, rho: f64) -> f64 {
        self.slope * rho * bump(rho / self.rho_support)
    }
    fn df(&self, rho: f64) -> f64 {
        let x = rho / self.rho_support;
        self.slope * (bump(x) + x * bump_deriv(x))
    }
    fn support(&self) -> f64 {
        self.rho_support
    }
}

/// Hamiltonian given by a closure.
pub struct FnHamiltonian<F> {
    pub f: F,
    pub support: f64,
}

impl<F: Fn(f64, &W) -> f64 + Send + Sync> TimePeriodicHamiltonian for FnHamiltonian<F> {
    fn value(&self, t: f64, w: &W) -> f64 {
        (self.f)(t, w)
    }
    fn support_radius(&self) -> f64 {
        self.support
    }
}

/// `amplitude (1 + modulation sin(2 pi freq t + phase)) bump(|w - c|^2 / r^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Bump {
    pub center: W,
    pub radius: f64,
    pub amplitude: f64,
    pub modulation: f64,
    pub freq: i32,
    pub phase: f64,
}

impl Bump {
    fn time_factor(&self, t: f64) -> f64 {
        1.0 + self.modulation * (2.0 * PI * self.freq as f64 * t + self.phase).sin()
    }
    fn space(&self, w: &W) -> (f64, f64, W) {
        let d = [w[0] - self.center[0], w[1] - self.center[1]];
        let x = (d[0] * d[0] + d[1] * d[1]) / (self.radius * self.radius);
        (bump(x), bump_deriv(x), d)
    }
}

/// Finite sum of [`Bump`]s with analytic derivatives.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BumpSum {
    pub bumps: Vec<Bump>,
}

impl TimePeriodicHamiltonian for BumpSum {
    fn value(&self, t: f64, w: &W) -> f64 {
        self.bumps.iter().map(|b| b.amplitude * b.time_factor(t) * b.space(w).0).sum()
    }
    fn support_radius(&self) -> f64 {
        self.bumps
            .iter()
            .map(|b| (b.center[0] * b.center[0] + b.center[1] * b.center[1]).sqrt() + b.radius)
            .fold(0.0, f64::max)
    }
    fn gradient(&self, t: f64, w: &W) -> W {
        let mut g = [0.0; 2];
        for b in &self.bumps {
            let (_, db, d) = b.space(w);
            let c = b.amplitude * b.time_factor(t) * db * 2.0 / (b.radius * b.radius);
            g[0] += c * d[0];
            g[1] += c * d[1];
        }
        g
    }
    fn dt(&self, t: f64, w: &W) -> f64 {
        self.bumps
            .iter()
            .map(|b| {
                let om = 2.0 * PI * b.freq as f64;
                b.amplitude * b.modulation * om * (om * t + b.phase).cos() * b.space(w).0
            })
            .sum()
    }
}

/// Monotone `eta: [0,1] -> [0,1]`, equal to 0 on `[0, margin]` and to 1 on
/// `[1 - margin, 1]`; returns `(eta, eta')`.
pub fn plateau_eta(t: f64, margin: f64) -> (f64, f64) {
    let len = 1.0 - 2.0 * margin;
    let x = (t - margin) / len;
    (smoothstep(x), smoothstep_deriv(x) / len)
}

/// `H^lambda(t, w) = eta_lambda'(t) H(eta_lambda(t), w)` with
/// `eta_lambda = (1 - lambda) id + lambda eta` on each period, `eta` from
/// [`plateau_eta`]; all members share the time-one map of `H`.
pub struct Reparametrized {
    pub h: Arc<dyn TimePeriodicHamiltonian>,
    pub lambda: f64,
    pub margin: f64,
}

impl Reparametrized {
    fn eta(&self, t: f64) -> (f64, f64) {
        let n = t.floor();
        let s = t - n;
        let (e, de) = plateau_eta(s, self.margin);
        (n + (1.0 - self.lambda) * s + self.lambda * e, (1.0 - self.lambda) + self.lambda * de)
    }
}

impl TimePeriodicHamiltonian for Reparametrized {
    fn value(&self, t: f64, w: &W) -> f64 {
        let (e, de) = self.eta(t);
        de * self.h.value(e, w)
    }
    fn support_radius(&self) -> f64 {
        self.h.support_radius()
    }
    fn gradient(&self, t: f64, w: &W) -> W {
        let (e, de) = self.eta(t);
        let g = self.h.gradient(e, w);
        [de * g[0], de * g[1]]
    }
}

/// `H(t, w) = eta'(t) f(|w|^2)` with `eta` from [`plateau_eta`]: radial,
/// vanishing for `t` near 0 mod 1, with flow `e^{-2i f'(|w|^2) (eta(t1) - eta(t0))} w`.
#[derive(Debug, Clone)]
pub struct WindowedRadial<P> {
    pub profile: P,
    pub margin: f64,
}

impl<P: RadialProfile> WindowedRadial<P> {
    fn window(&self, t: f64) -> (f64, f64) {
        let n = t.floor();
        let (e, de) = plateau_eta(t - n, self.margin);
        (n + e, de)
    }
}

impl<P: RadialProfile> TimePeriodicHamiltonian for WindowedRadial<P> {
    fn value(&self, t: f64, w: &W) -> f64 {
        self.window(t).1 * self.profile.f(w[0] * w[0] + w[1] * w[1])
    }
    fn support_radius(&self) -> f64 {
        self.profile.support().sqrt()
    }
    fn gradient(&self, t: f64, w: &W) -> W {
        let d = 2.0 * self.window(t).1 * self.profile.df(w[0] * w[0] + w[1] * w[1]);
        [d * w[0], d * w[1]]
    }
    fn exact_flow(&self, t0: f64, t1: f64, w: &W) -> Option<DiskFlow> {
        let rho = w[0] * w[0] + w[1] * w[1];
        let x = self.window(t1).0 - self.window(t0).0;
        let df = self.profile.df(rho);
        let (sn, cs) = (-2.0 * df * x).sin_cos();
        Some(DiskFlow {
            point: [cs * w[0] - sn * w[1], sn * w[0] + cs * w[1]],
            lambda_integral: -df * rho * x,
            h_integral: self.profile.f(rho) * x,
        })
    }
}

/// Checks the support radius and `H > -pi (1 - |w|^2)` on the nodes of `rule`.
pub fn check_admissible(h: &dyn TimePeriodicHamiltonian, rule: &TorusDiskRule) -> Result<()> {
    let r = h.support_radius();
    if !(r < 1.0) {
        return Err(Error::Domain(format!("support radius {r} is not below 1")));
    }
    for node in rule.rule().nodes {
        let w = [node[1], node[2]];
        let v = h.value(node[0], &w);
        if !(v > -PI * (1.0 - w[0] * w[0] - w[1] * w[1])) {
            return Err(Error::Domain(format!("H = {v} too negative at t = {}, w = {w:?}", node[0])));
        }
    }
    Ok(())
}

/// `Phi(s, t, w) = e^{2 pi i t} (sqrt(1 + s/pi - |w|^2), w)`.
pub fn phi_map(s: f64, t: f64, w: &W) -> Result<P4> {
    let w2 = w[0] * w[0] + w[1] * w[1];
    if !(s > PI * (w2 - 1.0)) {
        return Err(Error::Domain(format!("(s, w) = ({s}, {w:?}) lies outside the domain of Phi")));
    }
    let r1 = (1.0 + s / PI - w2).sqrt();
    let (sn, cs) = (2.0 * PI * t).sin_cos();
    Ok([r1 * cs, r1 * sn, cs * w[0] - sn * w[1], sn * w[0] + cs * w[1]])
}

/// Inverse of [`phi_map`] with `t` in `[0, 1)`; needs `z_1 != 0`.
pub fn phi_inverse(z: &P4) -> Result<(f64, f64, W)> {
    let r1 = (z[0] * z[0] + z[1] * z[1]).sqrt();
    if !(r1 > 0.0) {
        return Err(Error::Domain("Phi^{-1} is undefined on z_1 = 0".into()));
    }
    let ang = z[1].atan2(z[0]);
    let t = ang / (2.0 * PI);
    let t = t - t.floor();
    let (sn, cs) = (z[1] / r1, z[0] / r1);
    let w = [cs * z[2] + sn * z[3], -sn * z[2] + cs * z[3]];
    Ok((PI * (s3::dot(z, z) - 1.0), t, w))
}

struct DiskField<'a> {
    h: &'a dyn TimePeriodicHamiltonian,
}

impl VectorField for DiskField<'_> {
    fn dim(&self) -> usize {
        4
    }
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let w = [x[0], x[1]];
        let v = hamiltonian_field(self.h, t, &w);
        out[0] = v[0];
        out[1] = v[1];
        out[2] = lambda_hat(&w, &v);
        out[3] = self.h.value(t, &w);
    }
}

/// Endpoint of `phi_H` with the accumulated `int lambda_hat_0` and `int H dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DiskFlow {
    pub point: W,
    pub lambda_integral: f64,
    pub h_integral: f64,
}

impl DiskFlow {
    pub fn action(&self) -> f64 {
        self.lambda_integral + self.h_integral
    }
}

/// Flow of `X_H` from time `t0` to `t1` (either direction).
pub fn disk_flow_between(
    h: &dyn TimePeriodicHamiltonian,
    t0: f64,
    t1: f64,
    w: &W,
    cfg: &IntegratorConfig,
) -> Result<DiskFlow> {
    if !(w[0] * w[0] + w[1] * w[1] < 1.0) {
        return Err(Error::Domain(format!("{w:?} is not in the open unit disk")));
    }
    if let Some(f) = h.exact_flow(t0, t1, w) {
        return Ok(f);
    }
    disk_flow_integrated(h, t0, t1, w, cfg)
}

/// [`disk_flow_between`] by numerical integration, ignoring any closed form.
pub fn disk_flow_integrated(
    h: &dyn TimePeriodicHamiltonian,
    t0: f64,
    t1: f64,
    w: &W,
    cfg: &IntegratorConfig,
) -> Result<DiskFlow> {
    let x = flow_endpoint(&DiskField { h }, &[w[0], w[1], 0.0, 0.0], t0, t1, cfg)?;
    if !(x[0] * x[0] + x[1] * x[1] < 1.0) {
        return Err(Error::StiffOrBlowUp { t: t1 });
    }
    Ok(DiskFlow { point: [x[0], x[1]], lambda_integral: x[2], h_integral: x[3] })
}

/// `phi_H^t(w)` with action accumulators.
pub fn disk_flow(h: &dyn TimePeriodicHamiltonian, t: f64, w: &W, cfg: &IntegratorConfig) -> Result<DiskFlow> {
    disk_flow_between(h, 0.0, t, w, cfg)
}

/// `(phi_H^t)^{-1}(w)`.
pub fn disk_flow_inverse(h: &dyn TimePeriodicHamiltonian, t: f64, w: &W, cfg: &IntegratorConfig) -> Result<W> {
    Ok(disk_flow_between(h, t, 0.0, w, cfg)?.point)
}

/// Sampled path `t -> phi_H^t(w)` on `[0, t_end]`.
pub fn disk_trajectory(
    h: &dyn TimePeriodicHamiltonian,
    w: &W,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let tr = integrate_flow(&DiskField { h }, &[w[0], w[1], 0.0, 0.0], t_end, cfg)?;
    let last = tr.points.last().cloned().unwrap_or_default();
    Ok(Trajectory {
        times: tr.times,
        points: tr.points.into_iter().map(|p| vec![p[0], p[1]]).collect(),
        action_integrals: [last[2], last[3]],
    })
}

/// Default rule for Calabi integrals of `h`.
pub fn calabi_rule(h: &dyn TimePeriodicHamiltonian) -> TorusDiskRule {
    TorusDiskRule::new(32, DiskRule::new(h.support_radius().max(1e-3), 64, 128))
}

/// `Cal = int_{T x B} H dt ^ omega_hat`.
pub fn calabi(h: &dyn TimePeriodicHamiltonian) -> f64 {
    calabi_with(h, &calabi_rule(h))
}

pub fn calabi_with(h: &dyn TimePeriodicHamiltonian, rule: &TorusDiskRule) -> f64 {
    rule.integrate(|t, x, y| h.value(t, &[x, y]))
}

/// The domain `D(H)`; its radial amplitude is found per ray by solving
/// `pi (r^2 - 1) = H(t, r w)` with `(t, w)` read off the ray direction.
#[derive(Clone)]
pub struct LiftedDomain {
    pub h: Arc<dyn TimePeriodicHamiltonian>,
}

impl core::fmt::Debug for LiftedDomain {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("LiftedDomain").field("support_radius", &self.h.support_radius()).finish()
    }
}

impl LiftedDomain {
    pub fn new(h: Arc<dyn TimePeriodicHamiltonian>) -> Self {
        LiftedDomain { h }
    }

    /// Radius of `D(H)` along the ray through `z` in `S^3`.
    pub fn radius(&self, z: &P4) -> f64 {
        let z = s3::normalize(z);
        let Ok((_, t, zeta)) = phi_inverse(&z) else {
            return 1.0;
        };
        let h = &*self.h;
        let phi = |r: f64| PI * (r * r - 1.0) - h.value(t, &[r * zeta[0], r * zeta[1]]);
        let at_one = phi(1.0);
        if at_one == 0.0 {
            return 1.0;
        }
        let (lo, hi) = if at_one > 0.0 {
            (0.0, 1.0)
        } else {
            let mut hi = 1.25;
            while phi(hi) < 0.0 && hi < 1e6 {
                hi *= 1.25;
            }
            (1.0, hi)
        };
        bisect(phi, lo, hi, 0.0)
    }

    /// Whether `p` lies in `D(H)`.
    pub fn contains(&self, p: &P4) -> bool {
        let n = s3::norm(p);
        n == 0.0 || n < self.radius(p)
    }

    pub fn star_shaped(&self, grid: SphereGrid) -> Result<StarShapedDomain> {
        StarShapedDomain::new(Arc::new(LiftedRadius(self.clone())), 2, grid)
    }

    /// Conformal factor `r^2` of the form pulled back to `S^3`.
    pub fn contact_amplitude(&self) -> ContactAmplitude {
        ContactAmplitude::with_flag(Arc::new(LiftedConformal(self.clone())), false)
    }
}

struct LiftedRadius(LiftedDomain);
impl ScalarField for LiftedRadius {
    fn value(&self, z: &P4) -> f64 {
        self.0.radius(z)
    }
}

struct LiftedConformal(LiftedDomain);
impl ScalarField for LiftedConformal {
    fn value(&self, z: &P4) -> f64 {
        let r = self.0.radius(z);
        r * r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LiftedVolume {
    pub calabi: f64,
    /// `pi^2/2 + Cal`.
    pub formula_value: f64,
    /// Quadrature of the amplitude of `D(H)` on the sphere grid.
    pub quadrature_value: f64,
}

pub fn lifted_volume(h: Arc<dyn TimePeriodicHamiltonian>, grid: SphereGrid) -> Result<LiftedVolume> {
    let cal = calabi(&*h);
    let q = LiftedDomain::new(h).star_shaped(grid)?.volume()?;
    Ok(LiftedVolume { calabi: cal, formula_value: PI * PI / 2.0 + cal, quadrature_value: q })
}

/// A closed characteristic on `partial D(H)` lifted from a `k`-periodic point.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CharacteristicCertificate {
    pub w: W,
    pub k: usize,
    /// `k pi + A_{phi^k}(w)`.
    pub action_formula: f64,
    /// Period of the Reeb orbit of the pulled-back form through the lift.
    pub action_integrated: f64,
    pub basepoint: P4,
    pub residual: f64,
}

/// Distance at which a point counts as periodic.
pub const PERIODIC_TOL: f64 = 1e-9;

/// Lifts the `k`-periodic point `w` and integrates the characteristic it
/// generates on `partial D(H)` independently, via the Reeb flow of the
/// amplitude view of `D(H)`.
pub fn characteristic_from_periodic_point(
    h: Arc<dyn TimePeriodicHamiltonian>,
    w: &W,
    k: usize,
    cfg: &IntegratorConfig,
) -> Result<CharacteristicCertificate> {
    if k == 0 {
        return Err(Error::Argument("k must be positive".into()));
    }
    let fk = disk_flow(&*h, k as f64, w, cfg)?;
    let gap = ((fk.point[0] - w[0]).powi(2) + (fk.point[1] - w[1]).powi(2)).sqrt();
    if gap >= PERIODIC_TOL {
        return Err(Error::Precondition(format!("phi^{k}(w) misses w by {gap:e}")));
    }
    for d in (1..k).filter(|d| k % d == 0) {
        let fd = disk_flow(&*h, d as f64, w, cfg)?.point;
        if ((fd[0] - w[0]).powi(2) + (fd[1] - w[1]).powi(2)).sqrt() < PERIODIC_TOL {
            return Err(Error::Precondition(format!("w has period {d}, not minimal period {k}")));
        }
    }
    let action_formula = k as f64 * PI + fk.action();
    let domain = LiftedDomain::new(h.clone());
    let p = phi_map(h.value(0.0, w), 0.0, w)?;
    let z0 = s3::normalize(&p);
    let amp = domain.contact_amplitude();
    let flow = AutonomousFlow::new(reeb_field(&amp), IntegratorConfig::adaptive(1e-12));
    let search = OrbitSearch { tol: 1e-8, ..Default::default() };
    let orbit = find_closed_orbit(&flow, &z0, action_formula, &search)
        .ok_or_else(|| Error::Inconclusive("characteristic did not close".into()))?;
    Ok(CharacteristicCertificate {
        w: *w,
        k,
        action_formula,
        action_integrated: orbit.period,
        basepoint: s3::to_p4(&orbit.point),
        residual: orbit.residual,
    })
}

/// The lifted characteristic flow on `R x T x B` started at `(s, 0, w)`:
/// `(s + H(tau, phi^tau w) - H(0, w), tau, phi^tau w)`.
pub fn lifted_flow(
    h: &dyn TimePeriodicHamiltonian,
    s: f64,
    w: &W,
    tau: f64,
    cfg: &IntegratorConfig,
) -> Result<(f64, f64, W)> {
    let p = disk_flow(h, tau, w, cfg)?.point;
    Ok((s + h.value(tau, &p) - h.value(0.0, w), tau, p))
}

/// A family `lambda -> H^lambda`, `lambda in [0, 1]`.
pub type HamiltonianFamily = Arc<dyn Fn(f64) -> Arc<dyn TimePeriodicHamiltonian> + Send + Sync>;

/// Evaluators for `psi^t_lambda = phi^t_{H^lambda} (phi^t_{H^0})^{-1}`, the
/// loop Hamiltonian `G^lambda` and the map `psi_tilde_lambda` on `R x T x B`.
#[derive(Clone)]
pub struct Interpolation {
    pub family: HamiltonianFamily,
    pub cfg: IntegratorConfig,
}

impl Interpolation {
    pub fn psi(&self, lambda: f64, t: f64, w: &W) -> Result<W> {
        let h0 = (self.family)(0.0);
        let hl = (self.family)(lambda);
        let x = disk_flow_inverse(&*h0, t, w, &self.cfg)?;
        Ok(disk_flow(&*hl, t, &x, &self.cfg)?.point)
    }

    pub fn psi_inverse(&self, lambda: f64, t: f64, w: &W) -> Result<W> {
        let h0 = (self.family)(0.0);
        let hl = (self.family)(lambda);
        let x = disk_flow_inverse(&*hl, t, w, &self.cfg)?;
        Ok(disk_flow(&*h0, t, &x, &self.cfg)?.point)
    }

    /// `G^lambda(t, w) = H^lambda(t, w) - H^0(t, (psi^t_lambda)^{-1} w)`.
    pub fn g(&self, lambda: f64, t: f64, w: &W) -> Result<f64> {
        let h0 = (self.family)(0.0);
        let hl = (self.family)(lambda);
        Ok(hl.value(t, w) - h0.value(t, &self.psi_inverse(lambda, t, w)?))
    }

    pub fn psi_tilde(&self, lambda: f64, s: f64, t: f64, w: &W) -> Result<(f64, f64, W)> {
        let p = self.psi(lambda, t, w)?;
        Ok((s + self.g(lambda, t, &p)?, t, p))
    }

    /// `int_0^1 d/dlambda G^lambda(t, psi^t_lambda w) dt`, which vanishes
    /// exactly when `F^lambda_1 = F^lambda_0` along the loop through `w`.
    pub fn subclaim_integral(&self, lambda: f64, w: &W, n_t: usize) -> Result<f64> {
        let dl = 1e-4;
        let (l0, l1) = ((lambda - dl).max(0.0), (lambda + dl).min(1.0));
        let mut s = 0.0;
        for m in 0..n_t {
            let t = m as f64 / n_t as f64;
            let p = self.psi(lambda, t, w)?;
            s += (self.g(l1, t, &p)? - self.g(l0, t, &p)?) / (l1 - l0);
        }
        Ok(s / n_t as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InterpolationReport {
    /// Largest `|phi^1_{H^lambda}(w) - phi^1_{H^0}(w)|` on the test points.
    pub time1_gap: f64,
    /// Largest `|s' - H^lambda(t, w')|` for `(s', t, w') = psi_tilde(H^0(t, w), t, w)`.
    pub graph_error: f64,
    /// Largest `|int d/dlambda G^lambda dt|` along loops.
    pub subclaim_residual: f64,
}

/// Builds the interpolation data for a family with a common time-one map
/// and verifies it on `test_points`.
pub fn interpolation_symplectomorphism(
    family: HamiltonianFamily,
    lambdas: &[f64],
    test_points: &[W],
    cfg: &IntegratorConfig,
) -> Result<(Interpolation, InterpolationReport)> {
    let interp = Interpolation { family: family.clone(), cfg: *cfg };
    let h0 = family(0.0);
    let mut report = InterpolationReport { time1_gap: 0.0, graph_error: 0.0, subclaim_residual: 0.0 };
    for &l in lambdas {
        let hl = family(l);
        for w in test_points {
            let a = disk_flow(&*hl, 1.0, w, cfg)?.point;
            let b = disk_flow(&*h0, 1.0, w, cfg)?.point;
            report.time1_gap = report.time1_gap.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
        }
    }
    if report.time1_gap > 1e-7 {
        return Err(Error::Precondition(format!("time-one maps differ by {:e}", report.time1_gap)));
    }
    for &l in lambdas {
        let hl = family(l);
        for w in test_points {
            for t in [0.0, 0.3, 0.55, 0.8] {
                let (s1, t1, w1) = interp.psi_tilde(l, h0.value(t, w), t, w)?;
                report.graph_error = report.graph_error.max((s1 - hl.value(t1, &w1)).abs());
            }
            report.subclaim_residual = report.subclaim_residual.max(interp.subclaim_integral(l, w, 24)?.abs());
        }
    }
    Ok((interp, report))
}

/// Actions of the fixed point `w` of the common time-one map, one per `lambda`.
pub fn fixed_point_actions(family: &HamiltonianFamily, lambdas: &[f64], w: &W, cfg: &IntegratorConfig) -> Result<Vec<f64>> {
    lambdas.iter().map(|&l| Ok(disk_flow(&*family(l), 1.0, w, cfg)?.action())).collect()
}

/// Boxed zero Hamiltonian.
pub fn zero() -> Arc<dyn TimePeriodicHamiltonian> {
    Arc::new(ZeroHamiltonian)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::adaptive(1e-12)
    }

    fn sample_bumps() -> BumpSum {
        BumpSum {
            bumps: vec![
                Bump { center: [0.2, -0.1], radius: 0.5, amplitude: 0.08, modulation: 0.5, freq: 1, phase: 0.3 },
                Bump { center: [-0.3, 0.2], radius: 0.4, amplitude: -0.05, modulation: 0.3, freq: 2, phase: 1.0 },
            ],
        }
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi_map(0.0, 0.0, &[0.0, 0.0]).unwrap(), [1.0, 0.0, 0.0, 0.0]);
        let z = phi_map(0.0, 0.3, &[0.0, 0.0]).unwrap();
        assert!(s3::dist(&z, &[(0.6 * PI).cos(), (0.6 * PI).sin(), 0.0, 0.0]) < 1e-15);
        let z = phi_map(PI, 0.7, &[0.5, 0.4]).unwrap();
        assert!((s3::norm(&z) - 2f64.sqrt()).abs() < 1e-14);
        let (s, t, w) = phi_inverse(&z).unwrap();
        assert!((s - PI).abs() < 1e-13 && (t - 0.7).abs() < 1e-14);
        assert!((w[0] - 0.5).abs() < 1e-14 && (w[1] - 0.4).abs() < 1e-14);
        assert!(phi_map(-4.0, 0.0, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn pullback_identity() {
        // Phi^* lambda_0 = (pi + s) dt + lambda_hat_0, tested on coordinate vectors.
        let h = 1e-6;
        let mut worst = 0.0f64;
        for &(s, t, w) in &[(0.1, 0.2, [0.3, -0.2]), (-0.5, 0.9, [0.1, 0.6]), (1.0, 0.4, [-0.4, -0.4])] {
            let z = phi_map(s, t, &w).unwrap();
            let d = |ds: f64, dt: f64, dw: W| {
                let p = phi_map(s + h * ds, t + h * dt, &[w[0] + h * dw[0], w[1] + h * dw[1]]).unwrap();
                let m = phi_map(s - h * ds, t - h * dt, &[w[0] - h * dw[0], w[1] - h * dw[1]]).unwrap();
                s3::scale(0.5 / h, &s3::sub(&p, &m))
            };
            let expect = [0.0, PI + s, lambda_hat(&w, &[1.0, 0.0]), lambda_hat(&w, &[0.0, 1.0])];
            let vs = [d(1.0, 0.0, [0.0, 0.0]), d(0.0, 1.0, [0.0, 0.0]), d(0.0, 0.0, [1.0, 0.0]), d(0.0, 0.0, [0.0, 1.0])];
            for (v, e) in vs.iter().zip(expect) {
                worst = worst.max((s3::lambda0(&z, v) - e).abs());
            }
        }
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn zero_hamiltonian_flow() {
        let f = disk_flow(&ZeroHamiltonian, 1.0, &[0.3, 0.1], &cfg()).unwrap();
        assert_eq!(f.point, [0.3, 0.1]);
        assert_eq!(f.action(), 0.0);
        assert_eq!(calabi(&ZeroHamiltonian), 0.0);
    }

    #[test]
    fn radial_flow_and_action() {
        let h = Radial(BumpProfile { height: 0.3, rho_support: 0.6 });
        let w = [0.3, 0.2];
        let f = disk_flow(&h, 1.0, &w, &cfg()).unwrap();
        let e = h.exact_flow(1.0, &w);
        assert!((f.point[0] - e[0]).abs() < 1e-10 && (f.point[1] - e[1]).abs() < 1e-10);
        let f0 = disk_flow(&h, 1.0, &[0.0, 0.0], &cfg()).unwrap();
        assert!((f0.action() - h.fixed_point_action(0.0)).abs() < 1e-12);
    }

    #[test]
    fn windowed_radial_closed_form_matches_integration() {
        let h = WindowedRadial { profile: BumpProfile { height: 0.2, rho_support: 0.5 }, margin: 0.1 };
        for (t0, t1) in [(0.0, 1.0), (0.2, 0.7), (0.9, 0.3), (0.0, 2.0)] {
            let w = [0.3, -0.25];
            let a = h.exact_flow(t0, t1, &w).unwrap();
            let b = disk_flow_integrated(&h, t0, t1, &w, &cfg()).unwrap();
            assert!((a.point[0] - b.point[0]).abs() < 1e-10 && (a.point[1] - b.point[1]).abs() < 1e-10);
            assert!((a.action() - b.action()).abs() < 1e-10, "{a:?} {b:?}");
        }
        assert_eq!(h.value(0.05, &[0.1, 0.1]), 0.0);
    }

    #[test]
    fn radial_calabi() {
        let p = BumpProfile { height: 0.3, rho_support: 0.6 };
        let h = Radial(p);
        let n = 4000;
        let oracle: f64 = (0..n).map(|k| p.f((k as f64 + 0.5) * 0.6 / n as f64) * 0.6 / n as f64).sum::<f64>() * PI;
        assert!((calabi(&h) - oracle).abs() < 1e-7);
    }

    #[test]
    fn lifted_flow_matches_direct_integration() {
        let h = sample_bumps();
        let (s0, w0) = (h.value(0.0, &[0.1, 0.1]), [0.1, 0.1]);
        let field = crate::numerics::FnField::new(4, |_t: f64, x: &[f64], out: &mut [f64]| {
            let w = [x[2], x[3]];
            let v = hamiltonian_field(&h, x[1], &w);
            out[0] = h.dt(x[1], &w);
            out[1] = 1.0;
            out[2] = v[0];
            out[3] = v[1];
        });
        let tau = 0.77;
        let x = flow_endpoint(&field, &[s0, 0.0, w0[0], w0[1]], 0.0, tau, &cfg()).unwrap();
        let (s, t, w) = lifted_flow(&h, s0, &w0, tau, &cfg()).unwrap();
        assert!((x[0] - s).abs() < 1e-7 && (x[1] - t).abs() < 1e-12);
        assert!((x[2] - w[0]).abs() < 1e-7 && (x[3] - w[1]).abs() < 1e-7);
    }

    #[test]
    fn lifted_volume_matches_calabi() {
        let v = lifted_volume(Arc::new(sample_bumps()), SphereGrid::new(40, 48, 48)).unwrap();
        assert!((v.formula_value - v.quadrature_value).abs() / (PI * PI / 2.0) < 1e-5, "{v:?}");
        let z = lifted_volume(zero(), SphereGrid::new(8, 8, 8)).unwrap();
        assert!((z.quadrature_value - PI * PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn radial_characteristic_action() {
        let h: Arc<dyn TimePeriodicHamiltonian> = Arc::new(Radial(BumpProfile { height: 0.2, rho_support: 0.5 }));
        let c = characteristic_from_periodic_point(h, &[0.0, 0.0], 1, &cfg()).unwrap();
        assert!((c.action_formula - (PI + 0.2)).abs() < 1e-10);
        assert!((c.action_integrated - c.action_formula).abs() < 1e-6, "{c:?}");
        let z = characteristic_from_periodic_point(zero(), &[0.4, 0.0], 1, &cfg()).unwrap();
        assert!((z.action_integrated - PI).abs() < 1e-6);
        assert!(matches!(
            characteristic_from_periodic_point(Arc::new(sample_bumps()), &[0.1, 0.0], 1, &cfg()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn reparametrized_family_interpolation() {
        let base: Arc<dyn TimePeriodicHamiltonian> = Arc::new(sample_bumps());
        let family: HamiltonianFamily =
            Arc::new(move |l: f64| Arc::new(Reparametrized { h: base.clone(), lambda: l, margin: 0.05 }) as Arc<dyn TimePeriodicHamiltonian>);
        let pts = [[0.1, 0.2], [-0.2, 0.0]];
        let (_, rep) = interpolation_symplectomorphism(family, &[0.5, 1.0], &pts, &cfg()).unwrap();
        assert!(rep.time1_gap < 1e-9 && rep.graph_error < 1e-6 && rep.subclaim_residual < 1e-6, "{rep:?}");
    }

    #[test]
    fn constant_family_is_trivial() {
        let base: Arc<dyn TimePeriodicHamiltonian> = Arc::new(sample_bumps());
        let family: HamiltonianFamily = Arc::new(move |_l: f64| base.clone());
        let (interp, rep) = interpolation_symplectomorphism(family, &[1.0], &[[0.1, 0.1]], &cfg()).unwrap();
        assert!(rep.subclaim_residual < 1e-12);
        assert!(interp.g(1.0, 0.3, &[0.2, 0.1]).unwrap().abs() < 1e-9);
    }
}
