//! Reeb fields of `alpha = g alpha_0` on `S^3`, closed-orbit census, systole,
//! contact volume and systolic ratio.
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use crate::domains::{ClosedForm, ContactAmplitude};
use crate::error::{Error, Result};
use crate::numerics::s3::{self, P4};
use crate::numerics::{
    find_closed_orbit, flow_endpoint, flow_samples, AutonomousFlow, IntegratorConfig, OrbitSearch,
    SphereGrid, VectorField,
};

/// Reeb field of `g alpha_0`, obtained from the Hamiltonian field `i grad F`
/// of the 2-homogeneous defining function `F(p) = |p|^2 / g(p/|p|)` of the
/// boundary `{ sqrt(g(z)) z }` and pushed radially back to `S^3`.
#[derive(Clone, Debug)]
pub struct ReebField {
    pub amp: ContactAmplitude,
}

impl ReebField {
    pub fn try_velocity(&self, z: &P4) -> Result<P4> {
        let z = s3::normalize(z);
        let g = self.amp.g(&z);
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::NotStarShaped(z));
        }
        let r = g.sqrt();
        let p = s3::scale(r, &z);
        let dg = self.amp.grad(&z);
        // grad F(p) = 2p/g - |p|^2 g^{-2} grad_S g / |p|
        let grad_f = s3::sub(&s3::scale(2.0 / g, &p), &s3::scale(r / (g * g), &dg));
        if s3::norm(&grad_f) < 1e-14 {
            return Err(Error::NotStarShaped(z));
        }
        let pdot = s3::mul_i(&grad_f);
        let radial = s3::dot(&pdot, &z);
        Ok(s3::scale(1.0 / r, &s3::sub(&pdot, &s3::scale(radial, &z))))
    }

    pub fn velocity(&self, z: &P4) -> P4 {
        self.try_velocity(z).unwrap_or([f64::NAN; 4])
    }

    /// `alpha(v) = g(z) lambda_0(z)(v)`.
    pub fn alpha(&self, z: &P4, v: &P4) -> f64 {
        self.amp.g(z) * s3::lambda0(z, v)
    }
}

impl VectorField for ReebField {
    fn dim(&self) -> usize {
        4
    }
    fn eval(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.velocity(&s3::to_p4(x)));
    }
    fn project(&self, x: &mut [f64]) {
        let z = s3::normalize(&s3::to_p4(x));
        x.copy_from_slice(&z);
    }
}

pub fn reeb_field(amp: &ContactAmplitude) -> ReebField {
    ReebField { amp: amp.clone() }
}

/// Time-`t` Reeb flow.
pub fn reeb_flow(amp: &ContactAmplitude, t: f64, z: &P4, cfg: &IntegratorConfig) -> Result<P4> {
    let x = flow_endpoint(&reeb_field(amp), z, 0.0, t, cfg)?;
    Ok(s3::to_p4(&x))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClosedReebOrbit {
    pub basepoint: P4,
    /// Period, equal to the action since `alpha(R) = 1`.
    pub period: f64,
    pub residual: f64,
    /// Whether the orbit is a fiber of the round Hopf flow.
    pub fiber_flag: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SystoleMethod {
    /// Closed-form amplitude (constant or ellipsoid).
    Exact,
    /// Fiber-invariant amplitude: minimum over critical fibers.
    Invariant,
    /// Seeded closed-orbit search.
    Search,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SystolicReport {
    pub systole: f64,
    pub contact_volume: f64,
    pub ratio: f64,
    pub method: SystoleMethod,
    pub orbit_certificates: Vec<ClosedReebOrbit>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SystoleSearch {
    /// Orbits with longer period are ignored.
    pub ceiling: f64,
    /// Seeds sampled on `n_eta x n_delta` Hopf tori.
    pub n_eta: usize,
    pub n_delta: usize,
    pub orbit: OrbitSearch,
    pub integrator: IntegratorConfig,
    pub grid: SphereGrid,
}

impl Default for SystoleSearch {
    fn default() -> Self {
        SystoleSearch {
            ceiling: 4.0 * PI,
            n_eta: 5,
            n_delta: 6,
            orbit: OrbitSearch::default(),
            integrator: IntegratorConfig::adaptive(1e-12),
            grid: SphereGrid::standard(),
        }
    }
}

/// `int_{S^3} g^2 alpha_0 ^ d alpha_0` on the standard grid.
pub fn contact_volume(amp: &ContactAmplitude) -> f64 {
    contact_volume_on(amp, &SphereGrid::standard())
}

pub fn contact_volume_on(amp: &ContactAmplitude, grid: &SphereGrid) -> f64 {
    grid.integrate(|z| {
        let g = amp.g(z);
        g * g
    })
}

fn is_fiber(field: &ReebField, z: &P4) -> bool {
    let v = field.velocity(z);
    let iz = s3::mul_i(z);
    let along = s3::dot(&v, &iz);
    s3::norm(&s3::sub(&v, &s3::scale(along, &iz))) < 1e-8 * s3::norm(&v)
}

/// Certifies that the orbit through `z` closes at `period` (and not earlier
/// at `period / k`), re-integrating at a tenfold tighter tolerance.
pub fn certify_orbit(
    amp: &ContactAmplitude,
    z: &P4,
    period: f64,
    search: &SystoleSearch,
) -> Option<ClosedReebOrbit> {
    let field = reeb_field(amp);
    let tight = search.integrator.tightened(10.0);
    let end = flow_endpoint(&field, z, 0.0, period, &tight).ok()?;
    let residual = s3::dist(&s3::to_p4(&end), z);
    if residual >= search.orbit.tol {
        return None;
    }
    for k in 2..=search.orbit.max_divisor {
        let y = flow_endpoint(&field, z, 0.0, period / k as f64, &search.integrator).ok()?;
        if s3::dist(&s3::to_p4(&y), z) < search.orbit.tol {
            return None;
        }
    }
    Some(ClosedReebOrbit { basepoint: *z, period, residual, fiber_flag: is_fiber(&field, z) })
}

/// [`certify_orbit`], falling back to Newton shooting from `z` when the
/// located critical fiber is only accurate to the square root of the
/// optimizer tolerance.
fn certify_or_shoot(amp: &ContactAmplitude, z: &P4, period: f64, search: &SystoleSearch) -> Option<ClosedReebOrbit> {
    if let Some(c) = certify_orbit(amp, z, period, search) {
        return Some(c);
    }
    let flow = AutonomousFlow::new(reeb_field(amp), search.integrator.tightened(10.0));
    let o = find_closed_orbit(&flow, z, period, &search.orbit)?;
    if (o.period - period).abs() > 1e-6 * period {
        return None;
    }
    certify_orbit(amp, &s3::to_p4(&o.point), o.period, search)
}

/// Local minimum (`sign = 1`) or maximum (`sign = -1`) of a fiber-invariant
/// `g` on the Hopf base, by pattern search in `(eta, delta)` from the best node.
pub fn base_extremum(amp: &ContactAmplitude, grid: &SphereGrid, sign: f64) -> (P4, f64) {
    let obj = |eta: f64, delta: f64| sign * amp.g(&s3::from_hopf(eta, delta, 0.0));
    let mut best = (0.0, 0.0, f64::INFINITY);
    let consider = |eta: f64, delta: f64, best: &mut (f64, f64, f64)| {
        let v = obj(eta, delta);
        if v < best.2 {
            *best = (eta, delta, v);
        }
    };
    for i in 0..grid.n_eta {
        for j in 0..grid.n_delta {
            consider(grid.eta(i), grid.delta(j), &mut best);
        }
    }
    consider(0.0, 0.0, &mut best);
    consider(PI / 2.0, 0.0, &mut best);
    let mut step = PI / (2.0 * grid.n_eta.max(1) as f64);
    while step > 1e-11 {
        let (e, d, _) = best;
        let mut moved = false;
        for (de, dd) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let ne = (e + de).clamp(0.0, PI / 2.0);
            let before = best.2;
            consider(ne, d + dd, &mut best);
            moved |= best.2 < before;
        }
        if !moved {
            step *= 0.5;
        }
    }
    (s3::from_hopf(best.0, best.1, 0.0), sign * best.2)
}

/// Minimal certified closed-orbit period. Closed forms and fiber-invariant
/// amplitudes take the exact path (each still certified by integration);
/// anything else is searched from seeds and reported `Inconclusive` when no
/// orbit is found below the ceiling.
pub fn systole(amp: &ContactAmplitude, search: &SystoleSearch) -> Result<SystolicReport> {
    search.integrator.validate()?;
    let vol = contact_volume_on(amp, &search.grid);
    let (method, certs) = match amp.closed_form {
        Some(ClosedForm::Constant(c)) => {
            let z = [1.0, 0.0, 0.0, 0.0];
            (SystoleMethod::Exact, certify_orbit(amp, &z, PI * c, search).into_iter().collect())
        }
        Some(ClosedForm::Ellipsoid { a, b, .. }) => {
            let mut v = Vec::new();
            v.extend(certify_orbit(amp, &[1.0, 0.0, 0.0, 0.0], a, search));
            v.extend(certify_orbit(amp, &[0.0, 0.0, 1.0, 0.0], b, search));
            (SystoleMethod::Exact, v)
        }
        None if amp.invariant => {
            let (zmin, gmin) = base_extremum(amp, &search.grid, 1.0);
            let (zmax, gmax) = base_extremum(amp, &search.grid, -1.0);
            let low = certify_or_shoot(amp, &zmin, PI * gmin, search).ok_or_else(|| {
                Error::Inconclusive("the closed orbit over the minimum of g could not be certified".into())
            })?;
            let mut v = vec![low];
            v.extend(certify_or_shoot(amp, &zmax, PI * gmax, search));
            (SystoleMethod::Invariant, v)
        }
        None => (SystoleMethod::Search, search_orbits(amp, search)),
    };
    let certs: Vec<ClosedReebOrbit> = certs.into_iter().filter(|c| c.period <= search.ceiling).collect();
    let sys = certs.iter().map(|c| c.period).fold(f64::INFINITY, f64::min);
    if !sys.is_finite() {
        return Err(Error::Inconclusive("no closed Reeb orbit certified below the period ceiling".into()));
    }
    Ok(SystolicReport { systole: sys, contact_volume: vol, ratio: sys * sys / vol, method, orbit_certificates: certs })
}

fn search_orbits(amp: &ContactAmplitude, search: &SystoleSearch) -> Vec<ClosedReebOrbit> {
    let flow = AutonomousFlow::new(reeb_field(amp), search.integrator);
    let mut found: Vec<ClosedReebOrbit> = Vec::new();
    for i in 0..search.n_eta {
        let eta = (i as f64 + 0.5) * PI / (2.0 * search.n_eta as f64);
        for j in 0..search.n_delta {
            let delta = 2.0 * PI * j as f64 / search.n_delta as f64;
            let seed = s3::from_hopf(eta, delta, 0.0);
            let guess = PI * amp.g(&seed);
            if let Some(o) = find_closed_orbit(&flow, &seed, guess, &search.orbit) {
                let z = s3::to_p4(&o.point);
                if o.period <= search.ceiling {
                    found.push(ClosedReebOrbit {
                        basepoint: z,
                        period: o.period,
                        residual: o.residual,
                        fiber_flag: is_fiber(&flow.field, &z),
                    });
                }
            }
        }
    }
    found
}

/// `sys^2 / vol`.
pub fn systolic_ratio(amp: &ContactAmplitude, search: &SystoleSearch) -> Result<SystolicReport> {
    systole(amp, search)
}

/// Samples the Reeb orbit through `z` at the given times.
pub fn reeb_orbit_samples(
    amp: &ContactAmplitude,
    z: &P4,
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<P4>> {
    Ok(flow_samples(&reeb_field(amp), z, 0.0, times, cfg)?.iter().map(|x| s3::to_p4(x)).collect())
}

/// Largest `|F - 1|` along sampled orbits, with `F(z) = 1` on `S^3` read
/// through the defining function of `{ sqrt(g) z }`; checks the flow stays on `S^3`.
pub fn level_drift(amp: &ContactAmplitude, seeds: &[P4], t_max: f64, cfg: &IntegratorConfig) -> Result<f64> {
    let times: Vec<f64> = (1..=20).map(|k| t_max * k as f64 / 20.0).collect();
    let mut worst = 0.0f64;
    for z in seeds {
        for p in reeb_orbit_samples(amp, z, &times, cfg)? {
            let n2 = s3::dot(&p, &p);
            worst = worst.max((n2 - 1.0).abs());
        }
    }
    Ok(worst)
}

/// Reeb field of `g alpha_0` from the explicit formula
/// `R = 2iz/g - (i grad_S g - <i grad_S g, z> z)/g^2`; used as a cross-check.
pub fn reeb_formula(amp: &ContactAmplitude, z: &P4) -> P4 {
    let g = amp.g(z);
    let igs = s3::mul_i(&amp.grad(z));
    let xi = s3::sub(&igs, &s3::scale(s3::dot(&igs, z), z));
    s3::sub(&s3::scale(2.0 / g, &s3::mul_i(z)), &s3::scale(1.0 / (g * g), &xi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::ellipsoid_amplitude;
    use alloc::sync::Arc;

    fn bumpy() -> ContactAmplitude {
        ContactAmplitude::from_fn(
            |z: &P4| 1.0 + 0.05 * z[0] * z[2] + 0.03 * z[1] - 0.02 * z[3] * z[3],
            &SphereGrid::new(4, 4, 4),
        )
        .unwrap()
    }

    #[test]
    fn round_field_is_2iz() {
        let r = reeb_field(&ContactAmplitude::round());
        let z = s3::from_hopf(0.3, 1.0, 2.0);
        let v = r.velocity(&z);
        let w = s3::scale(2.0, &s3::mul_i(&z));
        assert!(s3::dist(&v, &w) < 1e-14);
    }

    #[test]
    fn alpha_of_reeb_is_one_and_formula_agrees() {
        let amp = bumpy();
        let r = reeb_field(&amp);
        for k in 0..50 {
            let z = s3::from_hopf(0.03 * k as f64, 0.7 * k as f64, 0.3 * k as f64);
            let v = r.velocity(&z);
            assert!((r.alpha(&z, &v) - 1.0).abs() < 1e-12);
            assert!(s3::dist(&v, &reeb_formula(&amp, &z)) < 1e-7);
        }
    }

    #[test]
    fn ellipsoid_flow_is_diagonal_rotation() {
        let (a, b) = (1.0, 2.0);
        let amp = ellipsoid_amplitude(a, b).unwrap();
        let z = s3::from_hopf(0.6, 0.4, 0.2);
        let t = 0.37;
        let got = reeb_flow(&amp, t, &z, &IntegratorConfig::adaptive(1e-12)).unwrap();
        let want = s3::rotate(&z, 2.0 * PI * t / a, 2.0 * PI * t / b);
        assert!(s3::dist(&got, &want) < 1e-9);
    }

    #[test]
    fn systoles() {
        let s = SystoleSearch::default();
        let r = systole(&ContactAmplitude::round(), &s).unwrap();
        assert!((r.systole - PI).abs() < 1e-12 && (r.ratio - 1.0).abs() < 1e-12);
        let e = systole(&ellipsoid_amplitude(1.0, 2.0).unwrap(), &s).unwrap();
        assert_eq!(e.systole, 1.0);
        assert!((e.ratio - 0.5).abs() < 1e-9);
        assert_eq!(e.orbit_certificates.len(), 2);
    }

    #[test]
    fn invariant_path_uses_min_fiber() {
        let f = Arc::new(crate::domains::FnScalar(|z: &P4| 1.0 + 0.05 * (2.0 * s3::u1(z) - 1.0)));
        let amp = ContactAmplitude::new(f, &SphereGrid::new(8, 8, 8)).unwrap();
        assert!(amp.invariant);
        let r = systole(&amp, &SystoleSearch::default()).unwrap();
        assert_eq!(r.method, SystoleMethod::Invariant);
        assert!((r.systole - 0.95 * PI).abs() < 1e-9);
        assert!(r.orbit_certificates.iter().all(|c| c.fiber_flag));
    }

    #[test]
    fn search_path_certifies_orbits() {
        let amp = bumpy();
        let s = SystoleSearch { n_eta: 3, n_delta: 3, ..Default::default() };
        let r = systole(&amp, &s).unwrap();
        assert_eq!(r.method, SystoleMethod::Search);
        let (_, lo) = base_extremum(&amp, &s.grid, 1.0);
        let (_, hi) = base_extremum(&amp, &s.grid, -1.0);
        assert!(r.systole > PI * lo - 1e-6 && r.systole < PI * hi + 1e-6);
        for c in &r.orbit_certificates {
            let end = reeb_flow(&amp, c.period, &c.basepoint, &IntegratorConfig::adaptive(1e-13)).unwrap();
            assert!(s3::dist(&end, &c.basepoint) < 1e-8);
        }
    }

    #[test]
    fn stays_on_sphere() {
        let amp = bumpy();
        let seeds = [s3::from_hopf(0.4, 0.1, 0.0), s3::from_hopf(1.2, 2.0, 1.0)];
        assert!(level_drift(&amp, &seeds, 3.0 * PI, &IntegratorConfig::adaptive(1e-11)).unwrap() < 1e-12);
    }
}
