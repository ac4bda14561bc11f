//! Ellipsoids, polydisks, star-shaped domains `A_f` and contact amplitudes on `S^3`.
use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
#[allow(unused_imports)]
use num_traits::Float;

use crate::capacities::{Exact, Rational};
use crate::error::{Error, Result};
use crate::numerics::fd_step;
use crate::numerics::s3::{self, P4};
use crate::numerics::SphereGrid;

/// Scalar field on `S^3` (or on `R^4 \ 0`). `gradient` returns the Euclidean
/// gradient of some smooth extension when it is known in closed form.
pub trait ScalarField: Send + Sync {
    fn value(&self, z: &P4) -> f64;
    fn gradient(&self, _z: &P4) -> Option<P4> {
        None
    }
}

/// Scalar field from a closure.
pub struct FnScalar<F>(pub F);

impl<F: Fn(&P4) -> f64 + Send + Sync> ScalarField for FnScalar<F> {
    fn value(&self, z: &P4) -> f64 {
        (self.0)(z)
    }
}

/// Scalar field from closures for the value and the gradient.
pub struct FnScalarGrad<F, G>(pub F, pub G);

impl<F, G> ScalarField for FnScalarGrad<F, G>
where
    F: Fn(&P4) -> f64 + Send + Sync,
    G: Fn(&P4) -> P4 + Send + Sync,
{
    fn value(&self, z: &P4) -> f64 {
        (self.0)(z)
    }
    fn gradient(&self, z: &P4) -> Option<P4> {
        Some((self.1)(z))
    }
}

/// Gradient of `f` restricted to `S^3` (tangential part), analytic when
/// available and central differences of `f(z/|z|)` otherwise.
pub fn sphere_gradient(f: &dyn ScalarField, z: &P4) -> P4 {
    let g = match f.gradient(z) {
        Some(g) => g,
        None => {
            let h = fd_step(1.0);
            let mut g = [0.0; 4];
            for k in 0..4 {
                let mut zp = *z;
                let mut zm = *z;
                zp[k] += h;
                zm[k] -= h;
                g[k] = (f.value(&s3::normalize(&zp)) - f.value(&s3::normalize(&zm))) / (2.0 * h);
            }
            g
        }
    };
    s3::tangent(z, &g)
}

/// Closed-form description carried next to sampled fields.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ClosedForm {
    Constant(f64),
    Ellipsoid { a: f64, b: f64, exact: Option<(Exact, Exact)> },
}

/// Positive conformal factor `g` with `alpha = g alpha_0` (so `g = f^2` for `A_f`).
#[derive(Clone)]
pub struct ContactAmplitude {
    field: Arc<dyn ScalarField>,
    pub closed_form: Option<ClosedForm>,
    pub invariant: bool,
}

impl fmt::Debug for ContactAmplitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContactAmplitude")
            .field("closed_form", &self.closed_form)
            .field("invariant", &self.invariant)
            .finish()
    }
}

struct Constant(f64);
impl ScalarField for Constant {
    fn value(&self, _z: &P4) -> f64 {
        self.0
    }
    fn gradient(&self, _z: &P4) -> Option<P4> {
        Some([0.0; 4])
    }
}

struct EllipsoidConformal {
    ka: f64,
    kb: f64,
}
impl ScalarField for EllipsoidConformal {
    fn value(&self, z: &P4) -> f64 {
        1.0 / (self.ka * s3::u1(z) + self.kb * (z[2] * z[2] + z[3] * z[3]))
    }
    fn gradient(&self, z: &P4) -> Option<P4> {
        let g = self.value(z);
        let c = -2.0 * g * g;
        Some([c * self.ka * z[0], c * self.ka * z[1], c * self.kb * z[2], c * self.kb * z[3]])
    }
}

struct Scaled(f64, Arc<dyn ScalarField>);
impl ScalarField for Scaled {
    fn value(&self, z: &P4) -> f64 {
        self.0 * self.1.value(z)
    }
    fn gradient(&self, z: &P4) -> Option<P4> {
        self.1.gradient(z).map(|g| s3::scale(self.0, &g))
    }
}

impl ContactAmplitude {
    /// Wraps a field, checking positivity and measuring fiber invariance on `grid`.
    pub fn new(field: Arc<dyn ScalarField>, grid: &SphereGrid) -> Result<Self> {
        let mut amp = ContactAmplitude { field, closed_form: None, invariant: false };
        let osc = amp.fiber_oscillation(grid)?;
        amp.invariant = osc < 1e-10;
        Ok(amp)
    }

    pub fn from_fn<F: Fn(&P4) -> f64 + Send + Sync + 'static>(f: F, grid: &SphereGrid) -> Result<Self> {
        ContactAmplitude::new(Arc::new(FnScalar(f)), grid)
    }

    /// Builds an amplitude whose invariance is known a priori.
    pub fn with_flag(field: Arc<dyn ScalarField>, invariant: bool) -> Self {
        ContactAmplitude { field, closed_form: None, invariant }
    }

    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::Argument("amplitude must be positive".into()));
        }
        Ok(ContactAmplitude {
            field: Arc::new(Constant(c)),
            closed_form: Some(ClosedForm::Constant(c)),
            invariant: true,
        })
    }

    pub fn round() -> Self {
        ContactAmplitude::constant(1.0).expect("positive")
    }

    pub fn field(&self) -> &Arc<dyn ScalarField> {
        &self.field
    }

    #[inline]
    pub fn g(&self, z: &P4) -> f64 {
        self.field.value(z)
    }

    /// Tangential gradient of `g` on `S^3`.
    pub fn grad(&self, z: &P4) -> P4 {
        sphere_gradient(&*self.field, z)
    }

    /// `r g`.
    pub fn scaled(&self, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::Argument("scale must be positive".into()));
        }
        let closed_form = self.closed_form.map(|c| match c {
            ClosedForm::Constant(v) => ClosedForm::Constant(r * v),
            ClosedForm::Ellipsoid { a, b, .. } => ClosedForm::Ellipsoid { a: r * a, b: r * b, exact: None },
        });
        Ok(ContactAmplitude { field: Arc::new(Scaled(r, self.field.clone())), closed_form, invariant: self.invariant })
    }

    /// `r g` for rational `r`, keeping exact ellipsoid parameters.
    pub fn scaled_exact(&self, r: Rational) -> Result<Self> {
        let rf = *r.numer() as f64 / *r.denom() as f64;
        let mut out = self.scaled(rf)?;
        if let Some(ClosedForm::Ellipsoid { a, b, exact: Some((ea, eb)) }) = self.closed_form {
            out.closed_form =
                Some(ClosedForm::Ellipsoid { a: rf * a, b: rf * b, exact: Some((ea.scale(r), eb.scale(r))) });
        }
        Ok(out)
    }

    /// Maximal oscillation of `g` along the sampled round fibers.
    pub fn fiber_oscillation(&self, grid: &SphereGrid) -> Result<f64> {
        let mut worst = 0.0f64;
        for i in 0..grid.n_eta {
            for j in 0..grid.n_delta {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for k in 0..grid.n_sigma {
                    let z = grid.node(i, j, k);
                    let v = self.g(&z);
                    if !(v > 0.0) || !v.is_finite() {
                        return Err(Error::NotStarShaped(z));
                    }
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                worst = worst.max(hi - lo);
            }
        }
        Ok(worst)
    }

    /// `(min g, max g)` over the grid nodes.
    pub fn sampled_range(&self, grid: &SphereGrid) -> (f64, f64) {
        grid.nodes().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (z, _)| {
            let v = self.g(&z);
            (lo.min(v), hi.max(v))
        })
    }
}

/// `g(z) = (pi |z1|^2 / a + pi |z2|^2 / b)^{-1}`, the conformal factor of `epsilon_{a,b}`.
pub fn ellipsoid_amplitude(a: f64, b: f64) -> Result<ContactAmplitude> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Argument("ellipsoid parameters must be positive".into()));
    }
    Ok(ContactAmplitude {
        field: Arc::new(EllipsoidConformal { ka: PI / a, kb: PI / b }),
        closed_form: Some(ClosedForm::Ellipsoid { a, b, exact: None }),
        invariant: true,
    })
}

/// [`ellipsoid_amplitude`] remembering exact parameters.
pub fn ellipsoid_amplitude_exact(a: Exact, b: Exact) -> Result<ContactAmplitude> {
    let mut amp = ellipsoid_amplitude(a.to_f64(), b.to_f64())?;
    amp.closed_form = Some(ClosedForm::Ellipsoid { a: a.to_f64(), b: b.to_f64(), exact: Some((a, b)) });
    Ok(amp)
}

/// `E(a_1, ..., a_n) = { sum pi |z_j|^2 / a_j < 1 }`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Ellipsoid {
    a: Vec<Exact>,
}

impl Ellipsoid {
    pub fn new(a: Vec<Exact>) -> Result<Self> {
        if a.is_empty() || a.iter().any(|x| !x.is_positive()) {
            return Err(Error::Argument("ellipsoid needs positive parameters".into()));
        }
        let p = a[0].pi_power;
        if let Some(x) = a.iter().find(|x| x.pi_power != p) {
            return Err(Error::MixedUnits(p, x.pi_power));
        }
        Ok(Ellipsoid { a })
    }

    pub fn a(&self) -> &[Exact] {
        &self.a
    }

    pub fn dimension(&self) -> usize {
        self.a.len()
    }

    /// `prod a_j / n!`.
    pub fn volume_exact(&self) -> Exact {
        let mut v = Exact::int(1);
        for (i, x) in self.a.iter().enumerate() {
            v = v.mul(x).scale(Rational::new(1, i as i64 + 1));
        }
        v
    }
}

impl fmt::Display for Ellipsoid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.a.iter().map(|x| format!("{x}")).collect();
        write!(f, "E({})", parts.join(","))
    }
}

/// `P(a, b) = { pi |z1|^2 < a, pi |z2|^2 < b }`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Polydisk {
    pub a: Exact,
    pub b: Exact,
}

impl Polydisk {
    pub fn new(a: Exact, b: Exact) -> Result<Self> {
        if !a.is_positive() || !b.is_positive() {
            return Err(Error::Argument("polydisk needs positive parameters".into()));
        }
        a.try_cmp(&b)?;
        Ok(Polydisk { a, b })
    }

    pub fn volume_exact(&self) -> Exact {
        self.a.mul(&self.b)
    }
}

impl fmt::Display for Polydisk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P({},{})", self.a, self.b)
    }
}

/// `A_f = { r z : 0 <= r < f(z), z in S^{2n-1} }`.
#[derive(Clone)]
pub struct StarShapedDomain {
    pub amplitude: Arc<dyn ScalarField>,
    pub dimension_n: usize,
    pub grid: SphereGrid,
}

impl fmt::Debug for StarShapedDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StarShapedDomain").field("dimension_n", &self.dimension_n).finish()
    }
}

struct Squared(Arc<dyn ScalarField>);
impl ScalarField for Squared {
    fn value(&self, z: &P4) -> f64 {
        let f = self.0.value(z);
        f * f
    }
    fn gradient(&self, z: &P4) -> Option<P4> {
        let f = self.0.value(z);
        self.0.gradient(z).map(|g| s3::scale(2.0 * f, &g))
    }
}

struct Sqrt(Arc<dyn ScalarField>);
impl ScalarField for Sqrt {
    fn value(&self, z: &P4) -> f64 {
        self.0.value(z).sqrt()
    }
    fn gradient(&self, z: &P4) -> Option<P4> {
        let f = self.0.value(z).sqrt();
        self.0.gradient(z).map(|g| s3::scale(0.5 / f, &g))
    }
}

impl StarShapedDomain {
    pub fn new(amplitude: Arc<dyn ScalarField>, dimension_n: usize, grid: SphereGrid) -> Result<Self> {
        let d = StarShapedDomain { amplitude, dimension_n, grid };
        if dimension_n == 2 {
            for (z, _) in d.grid.nodes() {
                let f = d.amplitude.value(&z);
                if !(f > 0.0) || !f.is_finite() {
                    return Err(Error::NotStarShaped(z));
                }
            }
        }
        Ok(d)
    }

    /// The star-shaped domain with `f = sqrt(g)`.
    pub fn from_contact(amp: &ContactAmplitude, grid: SphereGrid) -> Result<Self> {
        StarShapedDomain::new(Arc::new(Sqrt(amp.field().clone())), 2, grid)
    }

    /// Conformal factor `f^2` of the pulled-back form.
    pub fn contact_amplitude(&self) -> Result<ContactAmplitude> {
        ContactAmplitude::new(Arc::new(Squared(self.amplitude.clone())), &self.grid)
    }

    /// `(1/n!) int f^{2n} alpha_0 ^ d alpha_0^{n-1}`; only `n = 2` has a sphere rule.
    pub fn volume(&self) -> Result<f64> {
        if self.dimension_n != 2 {
            return Err(Error::Configuration(format!(
                "quadrature rule is on S^3 but the domain lives in C^{}",
                self.dimension_n
            )));
        }
        Ok(0.5 * self.grid.integrate(|z| self.amplitude.value(z).powi(4)))
    }

    /// `r A_f`.
    pub fn scaled(&self, r: f64) -> Self {
        StarShapedDomain {
            amplitude: Arc::new(Scaled(r, self.amplitude.clone())),
            dimension_n: self.dimension_n,
            grid: self.grid.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Domain {
    Ellipsoid(Ellipsoid),
    Polydisk(Polydisk),
    StarShaped(Box<StarShapedDomain>),
}

impl Domain {
    pub fn dimension(&self) -> usize {
        match self {
            Domain::Ellipsoid(e) => e.dimension(),
            Domain::Polydisk(_) => 2,
            Domain::StarShaped(s) => s.dimension_n,
        }
    }

    pub fn volume(&self) -> Result<f64> {
        volume(self)
    }
}

/// Euclidean volume `(1/n!) int omega_0^n`.
pub fn volume(domain: &Domain) -> Result<f64> {
    match domain {
        Domain::Ellipsoid(e) => Ok(e.volume_exact().to_f64()),
        Domain::Polydisk(p) => Ok(p.volume_exact().to_f64()),
        Domain::StarShaped(s) => s.volume(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn ball_volume() {
        let b = Ellipsoid::new(vec![Exact::pi(), Exact::pi()]).unwrap();
        assert!((volume(&Domain::Ellipsoid(b)).unwrap() - PI * PI / 2.0).abs() < 1e-14);
        let p = Polydisk::new(Exact::int(2), Exact::int(3)).unwrap();
        assert_eq!(p.volume_exact(), Exact::int(6));
    }

    #[test]
    fn ellipsoid_amplitude_values() {
        let g = ellipsoid_amplitude(1.0, 2.0).unwrap();
        assert!((g.g(&[1.0, 0.0, 0.0, 0.0]) - 1.0 / PI).abs() < 1e-15);
        let round = ellipsoid_amplitude(PI, PI).unwrap();
        let grid = SphereGrid::new(6, 6, 6);
        for (z, _) in grid.nodes() {
            assert!((round.g(&z) - 1.0).abs() < 1e-14);
        }
        assert!(g.fiber_oscillation(&grid).unwrap() < 1e-14);
    }

    #[test]
    fn analytic_and_fd_gradients_agree() {
        let g = ellipsoid_amplitude(1.3, 2.1).unwrap();
        let plain = FnScalar(|z: &P4| 1.0 / (PI * s3::u1(z) / 1.3 + PI * (z[2] * z[2] + z[3] * z[3]) / 2.1));
        let z = s3::from_hopf(0.7, 0.4, 1.9);
        let (a, b) = (g.grad(&z), sphere_gradient(&plain, &z));
        for k in 0..4 {
            assert!((a[k] - b[k]).abs() < 1e-8, "{a:?} {b:?}");
        }
    }

    #[test]
    fn star_shaped_ellipsoid_volume() {
        let amp = ellipsoid_amplitude(1.0, 2.0).unwrap();
        let d = StarShapedDomain::from_contact(&amp, SphereGrid::new(24, 8, 8)).unwrap();
        assert!((d.volume().unwrap() - 1.0).abs() < 1e-12);
        assert!((d.scaled(1.5).volume().unwrap() - 1.5f64.powi(4)).abs() < 1e-11);
        let bad = StarShapedDomain { dimension_n: 3, ..d };
        assert!(matches!(bad.volume(), Err(Error::Configuration(_))));
    }
}
