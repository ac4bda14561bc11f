//! Conjugation scheme producing Reeb flows with dense orbits near the
//! ellipsoid forms `epsilon_{a,b} = g_{a,b} alpha_0` on `S^3`.
//!
//! Stage maps are time-one flows of contact Hamiltonians invariant under the
//! Reeb flow of `epsilon_{a_j,b_j}`, so they preserve that form exactly; the
//! parameters then move to nearby rationals whose flow winds densely on the
//! torus `T = {|z_1|^2 = u_T}`.
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use crate::capacities::{Exact, Rational};
use crate::error::{Error, Result};
use crate::numerics::s3::{self, P4};
use crate::numerics::{flow_endpoint, smoothstep, smoothstep_deriv, FnField, IntegratorConfig, SphereGrid};

/// `a = pi p` style parameter pair of `epsilon_{a,b}`.
pub type Params = (Exact, Exact);

fn to_p4(x: &[f64]) -> P4 {
    s3::to_p4(x)
}

/// `g_{a,b}(z) = (pi |z_1|^2 / a + pi |z_2|^2 / b)^{-1}`.
pub fn ellipsoid_g(a: f64, b: f64, z: &P4) -> f64 {
    let u = z[0] * z[0] + z[1] * z[1];
    let v = z[2] * z[2] + z[3] * z[3];
    1.0 / (PI * u / a + PI * v / b)
}

/// Reeb field `(2 pi i z_1 / a, 2 pi i z_2 / b)` of `epsilon_{a,b}` on `S^3`.
pub fn ellipsoid_reeb(a: f64, b: f64, z: &P4) -> P4 {
    let (w1, w2) = (2.0 * PI / a, 2.0 * PI / b);
    [-w1 * z[1], w1 * z[0], -w2 * z[3], w2 * z[2]]
}

pub fn ellipsoid_flow(a: f64, b: f64, t: f64, z: &P4) -> P4 {
    s3::rotate(z, 2.0 * PI * t / a, 2.0 * PI * t / b)
}

/// `epsilon_{a,b}(z)(v)`.
pub fn ellipsoid_form(a: f64, b: f64, z: &P4, v: &P4) -> f64 {
    ellipsoid_g(a, b, z) * s3::lambda0(z, v)
}

/// Smallest `T > 0` with `T/a` and `T/b` integers.
pub fn common_period(p: &Params) -> Result<Exact> {
    let r = p.0.try_div(&p.1)?;
    if r.pi_power != 0 {
        return Err(Error::MixedUnits(p.0.pi_power, p.1.pi_power));
    }
    Ok(p.0.scale(Rational::from_integer(*r.value.denom())))
}

/// `c(u) cos(m theta_1 + n theta_2 + phase)`, where `c` is `amplitude` on
/// `[u_lo + ramp, u_hi - ramp]` and vanishes outside `(u_lo, u_hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrigTerm {
    pub amplitude: f64,
    pub m: i64,
    pub n: i64,
    pub phase: f64,
    pub u_lo: f64,
    pub u_hi: f64,
    pub ramp: f64,
}

impl TrigTerm {
    fn radial(&self, u: f64) -> (f64, f64) {
        let (x, y) = ((u - self.u_lo) / self.ramp, (self.u_hi - u) / self.ramp);
        let (s1, s2) = (smoothstep(x), smoothstep(y));
        let d = (smoothstep_deriv(x) * s2 - s1 * smoothstep_deriv(y)) / self.ramp;
        (self.amplitude * s1 * s2, self.amplitude * d)
    }
}

/// A contact Hamiltonian on `S^3` given as a sum of [`TrigTerm`]s.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrigHamiltonian {
    pub terms: Vec<TrigTerm>,
}

impl TrigHamiltonian {
    pub fn value(&self, z: &P4) -> f64 {
        let u = z[0] * z[0] + z[1] * z[1];
        let (t1, t2) = (z[1].atan2(z[0]), z[3].atan2(z[2]));
        self.terms
            .iter()
            .map(|t| {
                let (c, _) = t.radial(u);
                if c == 0.0 {
                    0.0
                } else {
                    c * (t.m as f64 * t1 + t.n as f64 * t2 + t.phase).cos()
                }
            })
            .sum()
    }

    /// Euclidean gradient of the extension constant along rays.
    pub fn gradient(&self, z: &P4) -> P4 {
        let u = z[0] * z[0] + z[1] * z[1];
        let (r1, r2) = (u, z[2] * z[2] + z[3] * z[3]);
        let (t1, t2) = (z[1].atan2(z[0]), z[3].atan2(z[2]));
        let mut g = [0.0; 4];
        for t in &self.terms {
            let (c, dc) = t.radial(u);
            if c == 0.0 && dc == 0.0 {
                continue;
            }
            let arg = t.m as f64 * t1 + t.n as f64 * t2 + t.phase;
            let (s, co) = arg.sin_cos();
            let du = dc * co;
            g[0] += du * 2.0 * z[0];
            g[1] += du * 2.0 * z[1];
            let a1 = -c * s * t.m as f64 / r1;
            let a2 = -c * s * t.n as f64 / r2;
            g[0] += -a1 * z[1];
            g[1] += a1 * z[0];
            g[2] += -a2 * z[3];
            g[3] += a2 * z[2];
        }
        g
    }

    /// `sup |K|` bound: the sum of amplitudes.
    pub fn amplitude_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.amplitude.abs()).sum()
    }

    /// Supports lie in `u_lo <= |z_1|^2 <= u_hi`; returns the outermost such band.
    pub fn support_band(&self) -> Option<(f64, f64)> {
        self.terms.iter().filter(|t| t.amplitude != 0.0).fold(None, |acc, t| match acc {
            None => Some((t.u_lo, t.u_hi)),
            Some((lo, hi)) => Some((lo.min(t.u_lo), hi.max(t.u_hi))),
        })
    }

    /// Chordal distance from the support to `Gamma_1 u Gamma_2`.
    pub fn distance_to_gamma(&self) -> f64 {
        match self.support_band() {
            None => f64::INFINITY,
            Some((lo, hi)) => lo.sqrt().min((1.0 - hi).sqrt()),
        }
    }
}

/// Whether the mode `(m, n)` is constant along the Reeb flow of `epsilon_{a,b}`:
/// `m / a + n / b = 0`, decided in exact arithmetic.
pub fn is_invariant_mode(m: i64, n: i64, p: &Params) -> Result<bool> {
    Ok(p.1.times(m).try_add(&p.0.times(n))?.is_zero())
}

/// Average of `K_raw` over one period of the Reeb flow of `epsilon_{a,b}`
/// (`a/b` rational). Each mode averages to itself or to zero, so the result
/// keeps exactly the invariant modes.
pub fn fiber_average_hamiltonian(k_raw: &TrigHamiltonian, p: &Params) -> Result<TrigHamiltonian> {
    common_period(p)?;
    let mut terms = Vec::new();
    for t in &k_raw.terms {
        if t.m == 0 && t.n == 0 || is_invariant_mode(t.m, t.n, p)? {
            terms.push(*t);
        }
    }
    Ok(TrigHamiltonian { terms })
}

/// Trapezoidal average of `K` along the Reeb orbit through `z` over one period.
pub fn orbit_average_quadrature(k: &TrigHamiltonian, p: &Params, z: &P4, n: usize) -> Result<f64> {
    let period = common_period(p)?.to_f64();
    let (a, b) = (p.0.to_f64(), p.1.to_f64());
    Ok((0..n).map(|j| k.value(&ellipsoid_flow(a, b, period * j as f64 / n as f64, z))).sum::<f64>() / n as f64)
}

/// `(iota_R dK)(z)`.
pub fn reeb_derivative(k: &TrigHamiltonian, p: &Params, z: &P4) -> f64 {
    s3::dot(&k.gradient(z), &ellipsoid_reeb(p.0.to_f64(), p.1.to_f64(), z))
}

/// Contact vector field of `K` for `epsilon_{a,b}`:
/// `X = K R + i grad_xi K / g` with `grad_xi` the projection onto `ker alpha_0`.
pub fn contact_vector_field(k: &TrigHamiltonian, a: f64, b: f64, z: &P4) -> P4 {
    let kv = k.value(z);
    let r = ellipsoid_reeb(a, b, z);
    let mut gr = k.gradient(z);
    let iz = s3::mul_i(z);
    let (c1, c2) = (s3::dot(&gr, z), s3::dot(&gr, &iz));
    for j in 0..4 {
        gr[j] -= c1 * z[j] + c2 * iz[j];
    }
    let y = s3::mul_i(&gr);
    let g = ellipsoid_g(a, b, z);
    core::array::from_fn(|j| kv * r[j] + y[j] / g)
}

/// A stage map `psi`: the time-one flow of an invariant contact Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StageMap {
    pub k: TrigHamiltonian,
    pub params: Params,
}

impl StageMap {
    pub fn is_identity(&self) -> bool {
        self.k.terms.iter().all(|t| t.amplitude == 0.0)
    }

    /// `psi^t(z)`.
    pub fn flow(&self, t: f64, z: &P4, cfg: &IntegratorConfig) -> Result<P4> {
        if self.is_identity() || t == 0.0 {
            return Ok(*z);
        }
        let (a, b) = (self.params.0.to_f64(), self.params.1.to_f64());
        let field = SphereField { f: |x: &P4| contact_vector_field(&self.k, a, b, x) };
        Ok(to_p4(&flow_endpoint(&field, z, 0.0, t, cfg)?))
    }

    /// `(psi^1(z), D psi^1(z) v)` by integrating the variational equation.
    pub fn flow_with_tangent(&self, z: &P4, v: &P4, cfg: &IntegratorConfig) -> Result<(P4, P4)> {
        if self.is_identity() {
            return Ok((*z, *v));
        }
        let (a, b) = (self.params.0.to_f64(), self.params.1.to_f64());
        let h = 1e-6;
        let field = FnField::new(8, |_t: f64, x: &[f64], out: &mut [f64]| {
            let p = to_p4(&x[..4]);
            let w = to_p4(&x[4..]);
            let xv = contact_vector_field(&self.k, a, b, &p);
            let nw = s3::norm(&w).max(1e-300);
            let plus = contact_vector_field(&self.k, a, b, &core::array::from_fn(|j| p[j] + h * w[j] / nw));
            let minus = contact_vector_field(&self.k, a, b, &core::array::from_fn(|j| p[j] - h * w[j] / nw));
            for j in 0..4 {
                out[j] = xv[j];
                out[4 + j] = nw * (plus[j] - minus[j]) / (2.0 * h);
            }
        });
        let x0 = [z[0], z[1], z[2], z[3], v[0], v[1], v[2], v[3]];
        let x = flow_endpoint(&field, &x0, 0.0, 1.0, cfg)?;
        Ok((to_p4(&x[..4]), to_p4(&x[4..])))
    }

    /// `int_0^1 (iota_R dK)(psi^s z) ds`, the log of the conformal factor of
    /// `(psi^1)^* epsilon` at `z`.
    pub fn conformal_exponent(&self, z: &P4, cfg: &IntegratorConfig) -> Result<f64> {
        if self.is_identity() {
            return Ok(0.0);
        }
        let (a, b) = (self.params.0.to_f64(), self.params.1.to_f64());
        let field = FnField::new(5, |_t: f64, x: &[f64], out: &mut [f64]| {
            let p = to_p4(&x[..4]);
            let xv = contact_vector_field(&self.k, a, b, &p);
            out[..4].copy_from_slice(&xv);
            out[4] = reeb_derivative(&self.k, &self.params, &p);
        });
        Ok(flow_endpoint(&field, &[z[0], z[1], z[2], z[3], 0.0], 0.0, 1.0, cfg)?[4])
    }
}

/// Time-`t` map of the contact vector field of `K` for `epsilon_{a,b}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactFlow {
    pub map: StageMap,
    pub t: f64,
    pub cfg: IntegratorConfig,
}

impl ContactFlow {
    pub fn apply(&self, z: &P4) -> Result<P4> {
        self.map.flow(self.t, z, &self.cfg)
    }

    pub fn apply_inverse(&self, z: &P4) -> Result<P4> {
        self.map.flow(-self.t, z, &self.cfg)
    }
}

pub fn contact_flow(k: &TrigHamiltonian, p: &Params, t: f64, cfg: &IntegratorConfig) -> ContactFlow {
    ContactFlow { map: StageMap { k: k.clone(), params: *p }, t, cfg: *cfg }
}

struct SphereField<F> {
    f: F,
}

impl<F: Fn(&P4) -> P4> crate::numerics::VectorField for SphereField<F> {
    fn dim(&self) -> usize {
        4
    }
    fn eval(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&(self.f)(&to_p4(x)));
    }
    fn project(&self, x: &mut [f64]) {
        let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= n);
    }
}

/// Tunable parts of the scheme.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SchemeConfig {
    /// Level `|z_1|^2` of the target torus.
    pub u_torus: f64,
    /// Stage Hamiltonians vanish where `|z_1|^2 < tube` or `> 1 - tube`.
    pub tube: f64,
    pub ramp: f64,
    /// `phi^{-1}(T)` must come within `torus_fraction * eps` of every center.
    pub torus_fraction: f64,
    /// Candidate `(M, amplitude)` pairs for `K = A c(u) sin(M (P theta_1 - Q theta_2))`.
    /// Where `c = 1` the time-one map shifts `|z_1|^2` by `2 A M cos(...)`, so
    /// `A = h / (2M)` folds `T` into `M` teeth reaching `u_T +- h`.
    pub candidates: Vec<(i64, f64)>,
    /// Candidate multipliers `N` of the update `p/q -> (N p + 1)/(N q)`.
    pub multipliers: Vec<i64>,
    /// Orbits are sampled over `min(period, max_orbit_time)`.
    pub max_orbit_time: f64,
    /// Number of centers of the density lattice.
    pub centers: usize,
    /// Nodes on which the pullback checks are sampled.
    pub check_grid: (usize, usize, usize),
    /// Torus samples `(n_theta1, n_theta2)` used to measure `phi^{-1}(T)`.
    pub torus_samples: (usize, usize),
    pub integrator: IntegratorConfig,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            u_torus: 0.5,
            tube: 0.004,
            ramp: 0.02,
            torus_fraction: 0.8,
            candidates: vec![(6, 0.04), (8, 0.03), (10, 0.024)],
            multipliers: vec![4, 8, 16, 32, 64, 96, 128, 192],
            max_orbit_time: 1000.0,
            centers: 500,
            check_grid: (4, 6, 6),
            torus_samples: (48, 192),
            integrator: IntegratorConfig::adaptive(1e-11),
        }
    }
}

/// Checkpointable state of the scheme after `stage` stages.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConjugationState {
    pub stage: usize,
    pub params: Params,
    /// `psi_0, psi_1, ...`; the conjugation is `phi = psi_{j-1} o ... o psi_0`.
    pub maps: Vec<StageMap>,
    pub eps_targets: Vec<f64>,
}

impl ConjugationState {
    /// Start at `epsilon_{pi, pi} = alpha_0`.
    pub fn initial() -> Self {
        let pi = Exact::pi();
        ConjugationState { stage: 0, params: (pi, pi), maps: Vec::new(), eps_targets: Vec::new() }
    }

    pub fn ab(&self) -> (f64, f64) {
        (self.params.0.to_f64(), self.params.1.to_f64())
    }

    /// `phi(z)`.
    pub fn conjugation(&self, z: &P4, cfg: &IntegratorConfig) -> Result<P4> {
        self.maps.iter().try_fold(*z, |p, m| m.flow(1.0, &p, cfg))
    }

    /// `phi^{-1}(z)`.
    pub fn conjugation_inverse(&self, z: &P4, cfg: &IntegratorConfig) -> Result<P4> {
        self.maps.iter().rev().try_fold(*z, |p, m| m.flow(-1.0, &p, cfg))
    }

    /// `phi^{-1}` applied to the point of `T` with angles `(theta_1, theta_2)`.
    pub fn torus_preimage(&self, u_t: f64, th1: f64, th2: f64, cfg: &IntegratorConfig) -> Result<P4> {
        let (r1, r2) = (u_t.sqrt(), (1.0 - u_t).sqrt());
        self.conjugation_inverse(&[r1 * th1.cos(), r1 * th1.sin(), r2 * th2.cos(), r2 * th2.sin()], cfg)
    }
}

/// `phi^{-1} o phi_epsilon^t o phi (z)`, the Reeb flow of `phi^* epsilon_{a_j,b_j}`.
pub fn conjugated_flow(state: &ConjugationState, t: f64, z: &P4, cfg: &IntegratorConfig) -> Result<P4> {
    let (a, b) = state.ab();
    let y = state.conjugation(z, cfg)?;
    state.conjugation_inverse(&ellipsoid_flow(a, b, t, &y), cfg)
}

/// Quasi-uniform points of `S^3`: `|z_1|^2` stratified, angles from an
/// additive recurrence with the plastic-number frequencies.
pub fn hopf_lattice(n: usize) -> Vec<P4> {
    let g = 1.324_717_957_244_746_f64;
    let (a1, a2) = (1.0 / g, 1.0 / (g * g));
    (0..n)
        .map(|k| {
            let u = (k as f64 + 0.5) / n as f64;
            let t1 = 2.0 * PI * ((0.5 + a1 * k as f64) % 1.0);
            let t2 = 2.0 * PI * ((0.5 + a2 * k as f64) % 1.0);
            let (r1, r2) = (u.sqrt(), (1.0 - u).sqrt());
            [r1 * t1.cos(), r1 * t1.sin(), r2 * t2.cos(), r2 * t2.sin()]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DensityCertificate {
    pub orbit: Vec<P4>,
    pub eps: f64,
    pub centers: Vec<P4>,
    pub covered: Vec<bool>,
    /// Largest distance from a center to the orbit sample.
    pub max_gap: f64,
}

impl DensityCertificate {
    pub fn passed(&self) -> bool {
        self.covered.iter().all(|&c| c)
    }
}

fn coverage(points: &[P4], centers: &[P4], eps: f64) -> (Vec<bool>, f64) {
    let mut gaps = vec![f64::INFINITY; centers.len()];
    for p in points {
        for (g, c) in gaps.iter_mut().zip(centers) {
            let d = s3::dist(p, c);
            if d < *g {
                *g = d;
            }
        }
    }
    let max_gap = gaps.iter().cloned().fold(0.0, f64::max);
    (gaps.iter().map(|&g| g < eps).collect(), max_gap)
}

/// Samples the conjugated orbit of `z0` on `[0, t_max]` and checks which of
/// `grid_size` lattice centers it passes within `eps` of. Sampling stops at
/// the first time every center is covered.
pub fn epsilon_density(
    state: &ConjugationState,
    z0: &P4,
    t_max: f64,
    eps: f64,
    grid_size: usize,
    cfg: &IntegratorConfig,
) -> Result<DensityCertificate> {
    if !(eps > 0.0) {
        return Err(Error::Argument("eps must be positive".into()));
    }
    let (a, b) = state.ab();
    let y0 = state.conjugation(z0, cfg)?;
    let speed = s3::norm(&ellipsoid_reeb(a, b, &y0)).max(1e-12);
    let dt = eps / (8.0 * speed);
    let n = (t_max / dt).ceil() as usize;
    let image = |t: f64| state.conjugation_inverse(&ellipsoid_flow(a, b, t, &y0), cfg);
    let centers = hopf_lattice(grid_size);
    let mut gaps = vec![f64::INFINITY; centers.len()];
    let mut uncovered = centers.len();
    let mut record = |p: &P4, gaps: &mut [f64]| {
        for (g, c) in gaps.iter_mut().zip(&centers) {
            let d = s3::dist(p, c);
            if d < *g {
                if *g >= eps && d < eps {
                    uncovered -= 1;
                }
                *g = d;
            }
        }
        uncovered
    };
    let p0 = image(0.0)?;
    record(&p0, &mut gaps);
    let mut orbit = vec![p0];
    // Bisect steps whose images are more than eps/4 apart; stop once every
    // center is covered.
    'outer: for k in 0..n {
        let (t0, t1) = (k as f64 * dt, ((k + 1) as f64 * dt).min(t_max));
        let mut stack = vec![(t1, image(t1)?, 0usize)];
        let mut t_prev = t0;
        while let Some((t, p, depth)) = stack.pop() {
            let last = *orbit.last().unwrap_or(&p);
            if depth < 12 && s3::dist(&last, &p) > 0.25 * eps {
                let tm = 0.5 * (t_prev + t);
                stack.push((t, p, depth + 1));
                stack.push((tm, image(tm)?, depth + 1));
            } else {
                orbit.push(p);
                t_prev = t;
                if record(&p, &mut gaps) == 0 {
                    break 'outer;
                }
            }
        }
    }
    let max_gap = gaps.iter().cloned().fold(0.0, f64::max);
    let covered = gaps.iter().map(|&g| g < eps).collect();
    Ok(DensityCertificate { orbit, eps, centers, covered, max_gap })
}

/// Measurements recorded for one stage.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StageReport {
    pub stage: usize,
    pub eps: f64,
    /// Chosen `(M, amplitude)`, `None` for the identity.
    pub candidate: Option<(i64, f64)>,
    pub multiplier: i64,
    pub params: Params,
    /// `max |(psi^* epsilon)(v) - epsilon(v)|` over sampled nodes and unit tangents `v`.
    pub form_deviation: f64,
    /// `max |exp(int iota_R dK) - 1|` over the nodes.
    pub conformal_deviation: f64,
    /// Sampled `C^0` distance between consecutive pulled-back forms.
    pub c0_distance: f64,
    pub budget: f64,
    /// Largest lattice-center distance to `phi^{-1}(T)`.
    pub torus_gap: f64,
    pub gamma_distance: f64,
    pub density_max_gap: f64,
}

fn tangent_basis(z: &P4) -> [P4; 3] {
    [s3::mul_i(z), [-z[2], z[3], z[0], -z[1]], [-z[3], -z[2], z[1], z[0]]]
}

/// Max over nodes and unit tangents of `|(psi^* eps)(v) - eps(v)|`, and
/// `max |exp(conformal exponent) - 1|`.
fn form_checks(m: &StageMap, grid: &SphereGrid, cfg: &IntegratorConfig) -> Result<(f64, f64)> {
    if m.is_identity() {
        return Ok((0.0, 0.0));
    }
    let (a, b) = (m.params.0.to_f64(), m.params.1.to_f64());
    let tight = cfg.tightened(100.0);
    let (mut dev, mut conf) = (0.0f64, 0.0f64);
    for (z, _) in grid.nodes() {
        for v in tangent_basis(&z) {
            let (pz, dv) = m.flow_with_tangent(&z, &v, &tight)?;
            dev = dev.max((ellipsoid_form(a, b, &pz, &dv) - ellipsoid_form(a, b, &z, &v)).abs());
        }
        conf = conf.max((m.conformal_exponent(&z, &tight)?.exp() - 1.0).abs());
    }
    Ok((dev, conf))
}

/// `max_z |(phi^*(eps' - eps))_z|` over the nodes, with `D phi` by the
/// variational equation of every stage map.
fn pullback_distance(maps: &[StageMap], old: &Params, new: &Params, grid: &SphereGrid, cfg: &IntegratorConfig) -> Result<f64> {
    let (a0, b0) = (old.0.to_f64(), old.1.to_f64());
    let (a1, b1) = (new.0.to_f64(), new.1.to_f64());
    let mut worst = 0.0f64;
    for (z, _) in grid.nodes() {
        let mut comps = [0.0; 3];
        for (c, v) in comps.iter_mut().zip(tangent_basis(&z)) {
            let (mut p, mut w) = (z, v);
            for m in maps {
                (p, w) = m.flow_with_tangent(&p, &w, cfg)?;
            }
            *c = ellipsoid_form(a1, b1, &p, &w) - ellipsoid_form(a0, b0, &p, &w);
        }
        worst = worst.max((comps[0] * comps[0] + comps[1] * comps[1] + comps[2] * comps[2]).sqrt());
    }
    Ok(worst)
}

/// Largest distance from a lattice center to the sampled `phi^{-1}(T)`.
pub fn torus_preimage_gap(state: &ConjugationState, cfg: &SchemeConfig) -> Result<f64> {
    let (n1, n2) = cfg.torus_samples;
    let mut pts = Vec::with_capacity(n1 * n2);
    for i in 0..n1 {
        for j in 0..n2 {
            let (t1, t2) = (2.0 * PI * i as f64 / n1 as f64, 2.0 * PI * j as f64 / n2 as f64);
            pts.push(state.torus_preimage(cfg.u_torus, t1, t2, &cfg.integrator)?);
        }
    }
    Ok(coverage(&pts, &hopf_lattice(cfg.centers), 0.0).1)
}

/// The invariant candidate `A c(u) sin(M (P theta_1 - Q theta_2))` for `a/b = P/Q`.
pub fn candidate_hamiltonian(p: &Params, m: i64, amplitude: f64, cfg: &SchemeConfig) -> Result<TrigHamiltonian> {
    let r = p.0.try_div(&p.1)?.value;
    let (pp, qq) = (*r.numer(), *r.denom());
    let term = TrigTerm {
        amplitude,
        m: m * pp,
        n: -m * qq,
        phase: -PI / 2.0,
        u_lo: cfg.tube,
        u_hi: 1.0 - cfg.tube,
        ramp: cfg.ramp,
    };
    Ok(TrigHamiltonian { terms: vec![term] })
}

/// `a/b = p/q -> (N p + 1)/(N q)` with `a` fixed.
pub fn updated_params(p: &Params, n: i64) -> Result<Params> {
    let r = p.0.try_div(&p.1)?.value;
    let next = Rational::new(n * r.numer() + 1, n * r.denom());
    Ok((p.0, p.0.scale(next.recip())))
}

/// Orbit of the new parameters through `phi^{-1}` of the torus basepoint,
/// over at most one period.
pub fn torus_orbit_certificate(state: &ConjugationState, cfg: &SchemeConfig, eps: f64) -> Result<DensityCertificate> {
    let z0 = state.torus_preimage(cfg.u_torus, 0.0, 0.0, &cfg.integrator)?;
    let t_max = common_period(&state.params)?.to_f64().min(cfg.max_orbit_time);
    epsilon_density(state, &z0, t_max, eps, cfg.centers, &cfg.integrator)
}

/// One stage: picks `psi_j` (identity first) so that `phi_{j+1}^{-1}(T)`
/// comes within `torus_fraction * eps` of every lattice center, then the smallest
/// multiplier whose parameters keep the pullback distance within `2^{-j}`
/// and make the orbit through `phi_{j+1}^{-1}(T)` `eps`-dense.
pub fn advance_stage(state: &ConjugationState, eps: f64, cfg: &SchemeConfig) -> Result<(ConjugationState, StageReport)> {
    let j = state.stage;
    let budget = 0.5f64.powi(j as i32);
    let grid = SphereGrid::new(cfg.check_grid.0, cfg.check_grid.1, cfg.check_grid.2);
    let mut options: Vec<Option<(i64, f64)>> = vec![None];
    options.extend(cfg.candidates.iter().map(|&c| Some(c)));
    let mut chosen = None;
    let mut best_gap = f64::INFINITY;
    for cand in options {
        let k = match cand {
            None => TrigHamiltonian::default(),
            Some((m, amp)) => candidate_hamiltonian(&state.params, m, amp, cfg)?,
        };
        let map = StageMap { k, params: state.params };
        let mut next = state.clone();
        next.maps.push(map);
        let gap = torus_preimage_gap(&next, cfg)?;
        best_gap = best_gap.min(gap);
        if gap < cfg.torus_fraction * eps {
            chosen = Some((cand, next, gap));
            break;
        }
    }
    let (cand, mut next, torus_gap) = chosen.ok_or(Error::StageBudget { stage: j, budget: cfg.torus_fraction * eps, measured: best_gap })?;
    let map = next.maps.last().cloned().unwrap_or(StageMap { k: TrigHamiltonian::default(), params: state.params });
    let (form_deviation, conformal_deviation) = form_checks(&map, &grid, &cfg.integrator)?;
    let mut last_err = f64::INFINITY;
    for &n in &cfg.multipliers {
        let params = updated_params(&state.params, n)?;
        let dist = pullback_distance(&next.maps, &state.params, &params, &grid, &cfg.integrator)?;
        if dist > budget {
            last_err = dist;
            continue;
        }
        let mut trial = next.clone();
        trial.params = params;
        let cert = torus_orbit_certificate(&trial, cfg, eps)?;
        if cert.passed() {
            next.params = params;
            next.stage = j + 1;
            next.eps_targets.push(eps);
            let report = StageReport {
                stage: j,
                eps,
                candidate: cand,
                multiplier: n,
                params,
                form_deviation,
                conformal_deviation,
                c0_distance: dist,
                budget,
                torus_gap,
                gamma_distance: map.k.distance_to_gamma(),
                density_max_gap: cert.max_gap,
            };
            return Ok((next, report));
        }
        last_err = last_err.min(cert.max_gap);
    }
    Err(Error::StageBudget { stage: j, budget, measured: last_err })
}

/// Runs `stages` stages from [`ConjugationState::initial`].
pub fn run_scheme(stages: usize, eps: f64, cfg: &SchemeConfig) -> Result<(ConjugationState, Vec<StageReport>)> {
    let mut state = ConjugationState::initial();
    let mut reports = Vec::new();
    for _ in 0..stages {
        let (next, rep) = advance_stage(&state, eps, cfg)?;
        state = next;
        reports.push(rep);
    }
    Ok((state, reports))
}

/// Resumes from a checkpointed state.
pub fn resume_scheme(state: ConjugationState, stages: usize, eps: f64, cfg: &SchemeConfig) -> Result<(ConjugationState, Vec<StageReport>)> {
    if state.stage > stages {
        return Err(Error::Argument(format!("state is already at stage {}", state.stage)));
    }
    let mut state = state;
    let mut reports = Vec::new();
    while state.stage < stages {
        let (next, rep) = advance_stage(&state, eps, cfg)?;
        state = next;
        reports.push(rep);
    }
    Ok((state, reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::adaptive(1e-11)
    }

    fn raw() -> TrigHamiltonian {
        let base = TrigTerm { amplitude: 0.1, m: 3, n: -3, phase: 0.3, u_lo: 0.01, u_hi: 0.99, ramp: 0.12 };
        // c(u) h(theta_1 - theta_2) (1 + beta cos(theta_1 + theta_2)) with beta = 0.4
        TrigHamiltonian {
            terms: vec![
                base,
                TrigTerm { amplitude: 0.02, m: 4, n: -2, ..base },
                TrigTerm { amplitude: 0.02, m: 2, n: -4, ..base },
            ],
        }
    }

    #[test]
    fn gradient_matches_differences() {
        let k = raw();
        let z = s3::normalize(&[0.5, 0.3, -0.4, 0.6]);
        let g = k.gradient(&z);
        for j in 0..4 {
            let h = 1e-6;
            let mut p = z;
            let mut q = z;
            p[j] += h;
            q[j] -= h;
            // extension constant along rays
            let fd = (k.value(&s3::normalize(&p)) - k.value(&s3::normalize(&q))) / (2.0 * h);
            let tang = g[j] - s3::dot(&g, &z) * z[j];
            assert!((fd - tang).abs() < 1e-7, "{j} {fd} {tang}");
        }
    }

    #[test]
    fn averaging_keeps_invariant_modes() {
        let p = (Exact::pi(), Exact::pi());
        let k = fiber_average_hamiltonian(&raw(), &p).unwrap();
        assert_eq!(k.terms.len(), 1);
        for z in hopf_lattice(40) {
            assert!(reeb_derivative(&k, &p, &z).abs() < 1e-9);
            let q = orbit_average_quadrature(&raw(), &p, &z, 16).unwrap();
            assert!((q - k.value(&z)).abs() < 1e-12);
        }
        let p2 = (Exact::pi(), Exact::new(Rational::new(3, 2), 1));
        let k2 = fiber_average_hamiltonian(&raw(), &p2).unwrap();
        assert!(k2.terms.is_empty());
        let z = s3::normalize(&[0.5, 0.3, -0.4, 0.6]);
        assert!(orbit_average_quadrature(&raw(), &p2, &z, 64).unwrap().abs() < 1e-12);
        let c = TrigHamiltonian { terms: vec![TrigTerm { amplitude: 0.7, m: 0, n: 0, phase: 0.0, u_lo: -1.0, u_hi: 2.0, ramp: 0.1 }] };
        assert_eq!(fiber_average_hamiltonian(&c, &p2).unwrap(), c);
    }

    #[test]
    fn invariant_flow_preserves_form() {
        let p = (Exact::pi(), Exact::pi());
        let m = StageMap { k: fiber_average_hamiltonian(&raw(), &p).unwrap(), params: p };
        let (dev, conf) = form_checks(&m, &SphereGrid::new(2, 3, 3), &cfg()).unwrap();
        assert!(dev < 1e-7 && conf < 1e-9, "{dev} {conf}");
        let bad = StageMap { k: raw(), params: p };
        let (dev, conf) = form_checks(&bad, &SphereGrid::new(2, 3, 3), &cfg()).unwrap();
        assert!(dev > 1e-4 && conf > 1e-4);
    }

    #[test]
    fn constant_hamiltonian_is_reeb_flow() {
        let p = (Exact::pi(), Exact::new(Rational::new(5, 4), 1));
        let k = TrigHamiltonian { terms: vec![TrigTerm { amplitude: 0.3, m: 0, n: 0, phase: 0.0, u_lo: -1.0, u_hi: 2.0, ramp: 0.1 }] };
        let f = contact_flow(&k, &p, 1.0, &cfg());
        let z = s3::normalize(&[0.3, 0.1, -0.5, 0.7]);
        let y = f.apply(&z).unwrap();
        assert!(s3::dist(&f.apply_inverse(&y).unwrap(), &z) < 1e-9);
        let e = ellipsoid_flow(PI, 1.25 * PI, 0.3, &z);
        assert!(s3::dist(&y, &e) < 1e-9);
        let zero = StageMap { k: TrigHamiltonian::default(), params: p };
        assert_eq!(zero.flow(1.0, &z, &cfg()).unwrap(), z);
    }

    #[test]
    fn conjugated_flow_properties() {
        let p = (Exact::pi(), Exact::pi());
        let sc = SchemeConfig::default();
        let k = candidate_hamiltonian(&p, 3, 0.15, &sc).unwrap();
        let mut st = ConjugationState::initial();
        st.maps.push(StageMap { k, params: p });
        st.params = updated_params(&p, 4).unwrap();
        let c = cfg();
        let z = s3::normalize(&[0.3, 0.2, 0.4, -0.5]);
        let a = conjugated_flow(&st, 0.7, &conjugated_flow(&st, 0.4, &z, &c).unwrap(), &c).unwrap();
        let b = conjugated_flow(&st, 1.1, &z, &c).unwrap();
        assert!(s3::dist(&a, &b) < 1e-8);
        let period = common_period(&st.params).unwrap().to_f64();
        assert!(s3::dist(&conjugated_flow(&st, period, &z, &c).unwrap(), &z) < 1e-8);
        let (aa, bb) = st.ab();
        for g in [[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.6, 0.8]] {
            let x = conjugated_flow(&st, 0.9, &g, &c).unwrap();
            assert!(s3::dist(&x, &ellipsoid_flow(aa, bb, 0.9, &g)) < 1e-12);
        }
        let empty = ConjugationState::initial();
        assert!(s3::dist(&conjugated_flow(&empty, 0.3, &z, &c).unwrap(), &ellipsoid_flow(PI, PI, 0.3, &z)) < 1e-15);
    }

    #[test]
    fn round_orbits_are_not_dense() {
        let st = ConjugationState::initial();
        let z = [0.6, 0.0, 0.8, 0.0];
        let cert = epsilon_density(&st, &z, PI, 0.2, 200, &cfg()).unwrap();
        assert!(!cert.passed());
        let all = epsilon_density(&st, &z, 0.1, 2.1, 50, &cfg()).unwrap();
        assert!(all.passed());
    }

    #[test]
    fn parameters_stay_rational() {
        let p = (Exact::pi(), Exact::pi());
        let q = updated_params(&p, 5).unwrap();
        assert_eq!(q.0.try_div(&q.1).unwrap().value, Rational::new(6, 5));
        assert_eq!(common_period(&q).unwrap(), Exact::new(Rational::from_integer(5), 1));
        let r = updated_params(&q, 2).unwrap();
        assert_eq!(r.0.try_div(&r.1).unwrap().value, Rational::new(13, 10));
    }

    #[test]
    fn stage_with_coarse_target_is_identity() {
        let sc = SchemeConfig { centers: 40, check_grid: (2, 3, 3), torus_samples: (8, 16), ..Default::default() };
        let (st, rep) = advance_stage(&ConjugationState::initial(), 1.6, &sc).unwrap();
        assert_eq!(rep.candidate, None);
        assert_eq!(st.stage, 1);
        assert!(rep.c0_distance <= rep.budget);
        assert_eq!(rep.form_deviation, 0.0);
    }

    #[test]
    fn stage_folds_torus_when_needed() {
        let sc = SchemeConfig { centers: 60, check_grid: (2, 3, 3), torus_samples: (16, 64), ..Default::default() };
        let (st, rep) = advance_stage(&ConjugationState::initial(), 0.6, &sc).unwrap();
        assert!(rep.candidate.is_some());
        assert!(rep.torus_gap < 0.6 * sc.torus_fraction);
        assert!(rep.form_deviation < 1e-7, "{}", rep.form_deviation);
        assert!(rep.gamma_distance > 0.06);
        let (st2, rep2) = advance_stage(&st, 0.6, &sc).unwrap();
        assert_eq!(rep2.candidate, None);
        assert!(rep2.c0_distance <= 0.5);
        assert_eq!(st2.maps.len(), 2);
    }

    proptest::proptest! {
        #[test]
        fn invariant_modes_have_zero_reeb_derivative(p in 1i64..9, q in 1i64..9, m in 1i64..4, s in 0.0f64..6.0) {
            let params = (Exact::pi(), Exact::new(Rational::new(q, p), 1));
            let sc = SchemeConfig::default();
            let k = candidate_hamiltonian(&params, m, 0.05, &sc).unwrap();
            proptest::prop_assert_eq!(fiber_average_hamiltonian(&k, &params).unwrap(), k.clone());
            let z = hopf_lattice(97)[(s * 15.0) as usize];
            proptest::prop_assert!(reeb_derivative(&k, &params, &z).abs() < 1e-9);
        }
    }
}
