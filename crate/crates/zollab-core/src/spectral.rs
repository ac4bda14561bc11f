//! Fiber averaging on `S^3`, short closed orbits of `S^1`-invariant forms,
//! the spectral invariants `c_0`, `c_1` near the Zoll form and Banach–Mazur
//! distances with their conformal geodesics.
use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use crate::capacities::{Exact, Rational};
use crate::domains::{ellipsoid_amplitude_exact, ClosedForm, ContactAmplitude, ScalarField};
use crate::error::{Error, Result};
use crate::numerics::s3::{self, P4};
use crate::numerics::{find_closed_orbit, AutonomousFlow, SphereGrid};
use crate::reeb::{base_extremum, reeb_field, systole, SystoleSearch, SystolicReport};

/// Mean of `values` computed as `v_0 + sum (v_k - v_0) / n`, exact when all agree.
fn stable_mean(values: &[f64]) -> f64 {
    let v0 = values[0];
    v0 + values.iter().map(|v| v - v0).sum::<f64>() / values.len() as f64
}

/// A fiber-constant field on the nodes of a product grid.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AveragedField {
    pub n_eta: usize,
    pub n_delta: usize,
    /// Base values, `eta`-major.
    pub values: Vec<f64>,
    pub fiber_period: f64,
}

impl AveragedField {
    pub fn base(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_delta + j]
    }

    /// Values on all nodes of `grid`, in [`SphereGrid::node`] order.
    pub fn expand(&self, grid: &SphereGrid) -> Vec<f64> {
        let mut out = Vec::with_capacity(grid.len());
        for i in 0..grid.n_eta {
            for j in 0..grid.n_delta {
                out.extend(core::iter::repeat_n(self.base(i, j), grid.n_sigma));
            }
        }
        out
    }
}

/// Averages node values (in [`SphereGrid::node`] order) over the fiber index.
pub fn fiber_average_nodes(values: &[f64], grid: &SphereGrid) -> Result<AveragedField> {
    if values.len() != grid.len() {
        return Err(Error::Argument(format!("{} node values for a grid of {}", values.len(), grid.len())));
    }
    let base = values.chunks(grid.n_sigma).map(stable_mean).collect();
    Ok(AveragedField { n_eta: grid.n_eta, n_delta: grid.n_delta, values: base, fiber_period: PI })
}

/// `bar f = (1/pi) int_0^pi f(e^{2it} z) dt` on the nodes of `grid`.
pub fn fiber_average(field: &dyn ScalarField, grid: &SphereGrid) -> AveragedField {
    let values: Vec<f64> = grid.nodes().map(|(z, _)| field.value(&z)).collect();
    let base = values.chunks(grid.n_sigma).map(stable_mean).collect();
    AveragedField { n_eta: grid.n_eta, n_delta: grid.n_delta, values: base, fiber_period: PI }
}

/// Fiber mean of `field` through an arbitrary point, with `n` samples.
pub fn fiber_mean(field: &dyn ScalarField, z: &P4, n: usize) -> f64 {
    let v: Vec<f64> = (0..n).map(|k| field.value(&s3::round_flow(PI * k as f64 / n as f64, z))).collect();
    stable_mean(&v)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ShortOrbitCertificate {
    pub basepoint: P4,
    /// `pi g` on the critical fiber.
    pub predicted_period: f64,
    pub integrated_period: f64,
    pub closure_residual: f64,
}

impl ShortOrbitCertificate {
    pub fn agrees(&self, tol: f64) -> bool {
        (self.predicted_period - self.integrated_period).abs() < tol && self.closure_residual < tol
    }
}

fn base_objective(amp: &ContactAmplitude, eta: f64, delta: f64) -> f64 {
    let h = 1e-6;
    let ge = (amp.g(&s3::from_hopf(eta + h, delta, 0.0)) - amp.g(&s3::from_hopf(eta - h, delta, 0.0))) / (2.0 * h);
    let gd = (amp.g(&s3::from_hopf(eta, delta + h, 0.0)) - amp.g(&s3::from_hopf(eta, delta - h, 0.0))) / (2.0 * h);
    ge * ge + gd * gd
}

/// Critical points of `g` on the Hopf base besides the extrema: local minima
/// of `|d g|^2` over the base grid, polished by pattern search.
fn base_critical_points(amp: &ContactAmplitude, grid: &SphereGrid) -> Vec<P4> {
    let (ne, nd) = (grid.n_eta, grid.n_delta);
    let q: Vec<f64> = (0..ne)
        .flat_map(|i| (0..nd).map(move |j| (i, j)))
        .map(|(i, j)| base_objective(amp, grid.eta(i), grid.delta(j)))
        .collect();
    let mut out = Vec::new();
    for i in 1..ne.saturating_sub(1) {
        for j in 0..nd {
            let v = q[i * nd + j];
            let nb = [(i - 1, j), (i + 1, j), (i, (j + 1) % nd), (i, (j + nd - 1) % nd)];
            if nb.iter().any(|&(a, b)| q[a * nd + b] < v) {
                continue;
            }
            let (mut e, mut d, mut best) = (grid.eta(i), grid.delta(j), v);
            let mut step = PI / (4.0 * ne as f64);
            while step > 1e-10 {
                let mut moved = false;
                for (de, dd) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
                    let (ne2, nd2) = ((e + de).clamp(1e-6, PI / 2.0 - 1e-6), d + dd);
                    let val = base_objective(amp, ne2, nd2);
                    if val < best {
                        (e, d, best) = (ne2, nd2, val);
                        moved = true;
                    }
                }
                if !moved {
                    step *= 0.5;
                }
            }
            if best < 1e-14 {
                out.push(s3::from_hopf(e, d, 0.0));
            }
        }
    }
    out
}

fn certify(amp: &ContactAmplitude, z: &P4, predicted: f64, search: &SystoleSearch) -> Option<ShortOrbitCertificate> {
    let flow = AutonomousFlow::new(reeb_field(amp), search.integrator);
    let o = find_closed_orbit(&flow, z, predicted, &search.orbit)?;
    Some(ShortOrbitCertificate {
        basepoint: *z,
        predicted_period: predicted,
        integrated_period: o.period,
        closure_residual: o.residual,
    })
}

/// Short closed orbits of an `S^1`-invariant form: the fibers over the
/// critical points of `g` on the base, each with period `pi g` certified by
/// an independent closed-orbit search.
pub fn short_orbits_from_average(amp: &ContactAmplitude, search: &SystoleSearch) -> Result<Vec<ShortOrbitCertificate>> {
    if !amp.invariant {
        return Err(Error::Unsupported("short orbits from averaging need an S^1-invariant amplitude".into()));
    }
    let mut fibers: Vec<(P4, f64)> = Vec::new();
    match amp.closed_form {
        Some(ClosedForm::Constant(c)) => {
            for (eta, delta) in [(0.0, 0.0), (PI / 4.0, 1.0), (PI / 2.0, 0.0)] {
                fibers.push((s3::from_hopf(eta, delta, 0.0), PI * c));
            }
        }
        Some(ClosedForm::Ellipsoid { a, b, .. }) => {
            fibers.push(([1.0, 0.0, 0.0, 0.0], a));
            fibers.push(([0.0, 0.0, 1.0, 0.0], b));
        }
        None => {
            let (zmin, gmin) = base_extremum(amp, &search.grid, 1.0);
            let (zmax, gmax) = base_extremum(amp, &search.grid, -1.0);
            fibers.push((zmin, PI * gmin));
            fibers.push((zmax, PI * gmax));
            for z in base_critical_points(amp, &search.grid) {
                let p = s3::hopf(&z);
                if fibers.iter().all(|(w, _)| {
                    let q = s3::hopf(w);
                    (0..3).map(|k| (p[k] - q[k]).powi(2)).sum::<f64>() > 1e-10
                }) {
                    fibers.push((z, PI * amp.g(&z)));
                }
            }
        }
    }
    let certs: Vec<ShortOrbitCertificate> = fibers.iter().filter_map(|(z, p)| certify(amp, z, *p, search)).collect();
    if certs.is_empty() {
        return Err(Error::Inconclusive("no critical fiber closed up".into()));
    }
    Ok(certs)
}

/// Largest `log g` minus smallest over the nodes of `grid` (closed forms exactly).
pub fn log_oscillation(amp: &ContactAmplitude, grid: &SphereGrid) -> f64 {
    match amp.closed_form {
        Some(ClosedForm::Constant(_)) => 0.0,
        Some(ClosedForm::Ellipsoid { a, b, .. }) => (a.max(b) / a.min(b)).ln(),
        None => {
            let (lo, hi) = amp.sampled_range(grid);
            (hi / lo).ln()
        }
    }
}

/// Default bound on `osc(log g)` for the near-Zoll regime.
pub const NEAR_ZOLL: f64 = 0.2;

/// `(c_0, c_1) = (pi min g, pi max g)` for invariant amplitudes near the round one.
pub fn spectral_c0_c1(amp: &ContactAmplitude, grid: &SphereGrid, near_zoll: f64) -> Result<(f64, f64)> {
    if !amp.invariant {
        return Err(Error::Unsupported("c_0, c_1 are only available for S^1-invariant amplitudes".into()));
    }
    let osc = log_oscillation(amp, grid);
    if osc > near_zoll {
        return Err(Error::Precondition(format!("osc(log g) = {osc} exceeds the near-Zoll bound {near_zoll}")));
    }
    Ok(match amp.closed_form {
        Some(ClosedForm::Constant(c)) => (PI * c, PI * c),
        Some(ClosedForm::Ellipsoid { a, b, .. }) => (a.min(b), a.max(b)),
        None => (PI * base_extremum(amp, grid, 1.0).1, PI * base_extremum(amp, grid, -1.0).1),
    })
}

/// Exact `(c_0, c_1)` of `epsilon_{a,b}`.
pub fn spectral_c0_c1_exact(a: &Exact, b: &Exact, near_zoll: f64) -> Result<(Exact, Exact)> {
    let lo = a.try_min(b)?;
    let hi = a.try_max(b)?;
    if !lo.is_positive() {
        return Err(Error::Argument("ellipsoid parameters must be positive".into()));
    }
    let osc = (hi.to_f64() / lo.to_f64()).ln();
    if osc > near_zoll {
        return Err(Error::Precondition(format!("osc(log g) = {osc} exceeds the near-Zoll bound {near_zoll}")));
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AxiomReport {
    pub checked: usize,
    pub scaling: bool,
    pub increasing: bool,
    pub monotonicity: bool,
}

/// Checks scaling, `c_0 <= c_1` and monotonicity of the exact values over
/// all pairs of `ellipsoids` and all `scales`.
pub fn check_spectral_axioms(ellipsoids: &[(Exact, Exact)], scales: &[Rational], near_zoll: f64) -> Result<AxiomReport> {
    let vals: Vec<(Exact, Exact)> = ellipsoids.iter().map(|(a, b)| spectral_c0_c1_exact(a, b, near_zoll)).collect::<Result<_>>()?;
    let mut rep = AxiomReport { checked: 0, scaling: true, increasing: true, monotonicity: true };
    for ((a, b), (c0, c1)) in ellipsoids.iter().zip(&vals) {
        rep.increasing &= c0.try_cmp(c1)?.is_le();
        for r in scales {
            let (s0, s1) = spectral_c0_c1_exact(&a.scale(*r), &b.scale(*r), near_zoll)?;
            rep.scaling &= s0 == c0.scale(*r) && s1 == c1.scale(*r);
        }
        rep.checked += 1;
    }
    for ((a, b), (c0, c1)) in ellipsoids.iter().zip(&vals) {
        for ((a2, b2), (d0, d1)) in ellipsoids.iter().zip(&vals) {
            if a.try_cmp(a2)?.is_le() && b.try_cmp(b2)?.is_le() {
                rep.monotonicity &= c0.try_cmp(d0)?.is_le() && c1.try_cmp(d1)?.is_le();
            }
        }
    }
    Ok(rep)
}

/// `log` of the amplitude along `gamma(t) = e^{t f} g_0` on fixed nodes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GeodesicPath {
    pub times: Vec<f64>,
    pub log_amplitudes: Vec<Vec<f64>>,
}

fn osc(v: &[f64]) -> f64 {
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    hi - lo
}

impl GeodesicPath {
    /// `osc(log gamma(t_j) - log gamma(t_{j-1}))`.
    pub fn segment_length(&self, j: usize) -> f64 {
        let d: Vec<f64> = self.log_amplitudes[j].iter().zip(&self.log_amplitudes[j - 1]).map(|(a, b)| a - b).collect();
        osc(&d)
    }

    pub fn length(&self) -> f64 {
        (1..self.times.len()).map(|j| self.segment_length(j)).sum()
    }

    pub fn amplitudes(&self, j: usize) -> Vec<f64> {
        self.log_amplitudes[j].iter().map(|v| v.exp()).collect()
    }
}

/// Samples `e^{t f} g_0` at `steps + 1` equally spaced times on nodes where
/// `log g_0` and `f` take the given values.
pub fn geodesic_path(log_g0: &[f64], f: &[f64], steps: usize) -> Result<GeodesicPath> {
    geodesic_path_at(log_g0, f, &(0..=steps).map(|j| j as f64 / steps.max(1) as f64).collect::<Vec<_>>(), steps)
}

/// [`geodesic_path`] on an arbitrary partition `0 = t_0 < ... < t_m = 1`.
pub fn geodesic_path_at(log_g0: &[f64], f: &[f64], times: &[f64], steps: usize) -> Result<GeodesicPath> {
    if steps < 2 && times.len() < 3 {
        return Err(Error::Argument("a geodesic needs at least two steps".into()));
    }
    if log_g0.len() != f.len() {
        return Err(Error::Argument("node counts differ".into()));
    }
    if times.first() != Some(&0.0) || times.last() != Some(&1.0) || times.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Argument("partition must increase from 0 to 1".into()));
    }
    let log_amplitudes = times
        .iter()
        .map(|&t| log_g0.iter().zip(f).map(|(g, v)| g + t * v).collect())
        .collect();
    Ok(GeodesicPath { times: times.to_vec(), log_amplitudes })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BMReport {
    pub t_min: f64,
    pub t_max: f64,
    pub distance: f64,
    /// `osc(log g)`, an upper bound for the distance.
    pub oscillation: f64,
    pub geodesic: GeodesicPath,
}

/// `d(alpha_0, g alpha_0) = log(T_max / T_min)` from certified short-orbit
/// periods, with the conformal geodesic from `alpha_0` sampled on `grid`.
pub fn bm_distance_near_zoll(amp: &ContactAmplitude, search: &SystoleSearch, steps: usize) -> Result<BMReport> {
    let periods: Vec<f64> = if amp.invariant {
        let certs = short_orbits_from_average(amp, search)?;
        let good: Vec<f64> = certs.iter().filter(|c| c.agrees(1e-6)).map(|c| c.predicted_period).collect();
        if good.len() < certs.len() || good.is_empty() {
            return Err(Error::Inconclusive("a short-orbit period could not be certified".into()));
        }
        good
    } else {
        let rep: SystolicReport = systole(amp, search)?;
        rep.orbit_certificates.iter().map(|c| c.period).collect()
    };
    let t_min = periods.iter().cloned().fold(f64::INFINITY, f64::min);
    let t_max = periods.iter().cloned().fold(0.0, f64::max);
    let distance = (t_max / t_min).ln();
    let oscillation = log_oscillation(amp, &search.grid);
    if distance > oscillation + 1e-9 {
        return Err(Error::Inconclusive(format!("distance {distance} exceeds osc(log g) = {oscillation}")));
    }
    let f: Vec<f64> = search.grid.nodes().map(|(z, _)| amp.g(&z).ln()).collect();
    let zero = alloc::vec![0.0; f.len()];
    let geodesic = geodesic_path(&zero, &f, steps.max(2))?;
    Ok(BMReport { t_min, t_max, distance, oscillation, geodesic })
}

/// `d` between two amplitudes of the ellipsoid family, exactly from the parameters.
pub fn ellipsoid_bm_distance(a: &Exact, b: &Exact) -> Result<f64> {
    let amp = ellipsoid_amplitude_exact(*a, *b)?;
    Ok(log_oscillation(&amp, &SphereGrid::new(1, 1, 1)))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CorollaryReport {
    pub ratio: f64,
    pub equality: bool,
    pub constant: bool,
    /// `ratio <= 1 + tol`, and equality only for constant `g`.
    pub passed: bool,
}

/// Local maximality of the systolic ratio at the Zoll form, with the rigidity clause.
pub fn systolic_corollary_check(amp: &ContactAmplitude, search: &SystoleSearch, tol: f64) -> Result<CorollaryReport> {
    let rep = systole(amp, search)?;
    let (lo, hi) = match amp.closed_form {
        Some(ClosedForm::Constant(c)) => (c, c),
        _ => amp.sampled_range(&search.grid),
    };
    let constant = hi - lo <= tol * hi;
    let equality = (rep.ratio - 1.0).abs() <= tol;
    Ok(CorollaryReport { ratio: rep.ratio, equality, constant, passed: rep.ratio <= 1.0 + tol && (!equality || constant) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{ellipsoid_amplitude, FnScalar};
    use alloc::sync::Arc;
    use alloc::vec;

    fn u1(z: &P4) -> f64 {
        z[0] * z[0] + z[1] * z[1]
    }

    #[test]
    fn averaging() {
        let grid = SphereGrid::new(6, 8, 16);
        let c = fiber_average(&FnScalar(|_: &P4| 2.5), &grid);
        assert!(c.values.iter().all(|&v| v == 2.5));
        let inv = fiber_average(&FnScalar(u1), &grid);
        for i in 0..6 {
            for j in 0..8 {
                assert!((inv.base(i, j) - u1(&grid.node(i, j, 0))).abs() < 1e-15);
            }
        }
        let re = fiber_average(&FnScalar(|z: &P4| z[0] * z[2] - z[1] * z[3]), &grid);
        assert!(re.values.iter().all(|v| v.abs() < 1e-15));
        let twice = fiber_average_nodes(&inv.expand(&grid), &grid).unwrap();
        assert_eq!(twice, inv);
    }

    #[test]
    fn averaging_commutes_with_invariant_factor() {
        let grid = SphereGrid::new(5, 6, 12);
        let h = FnScalar(|z: &P4| z[0] * z[2] + 0.3 * z[1] + 1.0);
        let gh = FnScalar(|z: &P4| (1.0 + u1(z)) * (z[0] * z[2] + 0.3 * z[1] + 1.0));
        let a = fiber_average(&gh, &grid);
        let b = fiber_average(&h, &grid);
        for i in 0..5 {
            for j in 0..6 {
                let g = 1.0 + u1(&grid.node(i, j, 0));
                assert!((a.base(i, j) - g * b.base(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn short_orbits_of_invariant_perturbation() {
        let grid = SphereGrid::new(12, 16, 16);
        let field = Arc::new(FnScalar(|z: &P4| 1.0 + 0.05 * (2.0 * u1(z) - 1.0)));
        let amp = ContactAmplitude::new(field, &grid).unwrap();
        assert!(amp.invariant);
        let search = SystoleSearch { grid, ..Default::default() };
        let certs = short_orbits_from_average(&amp, &search).unwrap();
        let mut periods: Vec<f64> = certs.iter().map(|c| c.integrated_period).collect();
        periods.sort_by(f64::total_cmp);
        assert!((periods[0] - PI * 0.95).abs() < 1e-6);
        assert!((periods.last().unwrap() - PI * 1.05).abs() < 1e-6);
        assert!(certs.iter().all(|c| c.agrees(1e-6)));
    }

    #[test]
    fn ellipsoid_invariants() {
        let (a, b) = (PI * 1.02, PI * 0.98);
        let amp = ellipsoid_amplitude(a, b).unwrap();
        let search = SystoleSearch::default();
        let (c0, c1) = spectral_c0_c1(&amp, &search.grid, NEAR_ZOLL).unwrap();
        assert_eq!((c0, c1), (b, a));
        let rep = bm_distance_near_zoll(&amp, &search, 4).unwrap();
        assert!((rep.distance - (a / b).ln()).abs() < 1e-9);
        let round = ContactAmplitude::round();
        assert_eq!(spectral_c0_c1(&round, &search.grid, NEAR_ZOLL).unwrap(), (PI, PI));
        let scaled = ContactAmplitude::constant(1.7).unwrap();
        assert_eq!(bm_distance_near_zoll(&scaled, &search, 2).unwrap().distance, 0.0);
        let noninv = ContactAmplitude::with_flag(Arc::new(FnScalar(|z: &P4| 1.0 + 0.01 * z[0])), false);
        assert!(matches!(spectral_c0_c1(&noninv, &search.grid, NEAR_ZOLL), Err(Error::Unsupported(_))));
    }

    #[test]
    fn axioms_on_small_grid() {
        let e: Vec<(Exact, Exact)> = (0..3)
            .flat_map(|i| (0..3).map(move |j| (Exact::new(Rational::new(100 + i, 100), 1), Exact::new(Rational::new(100 + 2 * j, 100), 1))))
            .collect();
        let rep = check_spectral_axioms(&e, &[Rational::new(1, 2), Rational::new(7, 3)], NEAR_ZOLL).unwrap();
        assert!(rep.scaling && rep.increasing && rep.monotonicity);
        assert_eq!(rep.checked, 9);
    }

    #[test]
    fn telescoping() {
        let f = vec![0.3, -0.2, 0.1, 0.05];
        let g0 = vec![0.0; 4];
        let p = geodesic_path_at(&g0, &f, &[0.0, 0.5, 1.0], 2).unwrap();
        assert!((p.length() - 0.5).abs() < 1e-12);
        let fine = geodesic_path(&g0, &f, 8).unwrap();
        assert!((fine.length() - p.length()).abs() < 1e-12);
        let flat = geodesic_path(&g0, &[0.0; 4], 3).unwrap();
        assert_eq!(flat.length(), 0.0);
        assert!(geodesic_path(&g0, &f, 1).is_err());
    }

    #[test]
    fn corollary() {
        let search = SystoleSearch::default();
        let r = systolic_corollary_check(&ContactAmplitude::round(), &search, 1e-6).unwrap();
        assert!(r.passed && r.equality && r.constant);
        let e = ellipsoid_amplitude(PI / 1.1_f64.sqrt(), PI * 1.1_f64.sqrt()).unwrap();
        let r = systolic_corollary_check(&e, &search, 1e-6).unwrap();
        assert!(r.passed && !r.equality);
        assert!((r.ratio - 1.0 / 1.1).abs() < 1e-6);
    }
}
