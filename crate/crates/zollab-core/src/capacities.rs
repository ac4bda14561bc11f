//! Exact capacity combinatorics on ellipsoids and polydisks.
//!
//! Values are rationals times a power of `pi`. Comparing values carrying
//! different powers of `pi` is an error rather than an approximation.
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;
use num_rational::Ratio;
#[allow(unused_imports)]
use num_traits::Float;
use num_traits::{One, Signed, Zero};

use crate::domains::{Domain, Ellipsoid, Polydisk};
use crate::error::{Error, Result};

pub type Rational = Ratio<i64>;

/// `value * pi^pi_power`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Exact {
    pub value: Rational,
    pub pi_power: i32,
}

impl Exact {
    pub fn new(value: Rational, pi_power: i32) -> Self {
        Exact { value, pi_power }
    }

    pub fn int(n: i64) -> Self {
        Exact::new(Rational::from_integer(n), 0)
    }

    pub fn ratio(n: i64, d: i64) -> Self {
        Exact::new(Rational::new(n, d), 0)
    }

    pub fn pi() -> Self {
        Exact::new(Rational::one(), 1)
    }

    pub fn zero() -> Self {
        Exact::new(Rational::zero(), 0)
    }

    pub fn is_zero(&self) -> bool {
        self.value.is_zero()
    }

    pub fn to_f64(&self) -> f64 {
        let v = *self.value.numer() as f64 / *self.value.denom() as f64;
        v * core::f64::consts::PI.powi(self.pi_power)
    }

    fn unit_of(&self, other: &Exact) -> Result<i32> {
        if self.is_zero() {
            Ok(other.pi_power)
        } else if other.is_zero() || self.pi_power == other.pi_power {
            Ok(self.pi_power)
        } else {
            Err(Error::MixedUnits(self.pi_power, other.pi_power))
        }
    }

    pub fn try_cmp(&self, other: &Exact) -> Result<Ordering> {
        self.unit_of(other)?;
        Ok(self.value.cmp(&other.value))
    }

    pub fn try_add(&self, other: &Exact) -> Result<Exact> {
        let p = self.unit_of(other)?;
        Ok(Exact::new(self.value + other.value, p))
    }

    pub fn try_sub(&self, other: &Exact) -> Result<Exact> {
        let p = self.unit_of(other)?;
        Ok(Exact::new(self.value - other.value, p))
    }

    pub fn mul(&self, other: &Exact) -> Exact {
        Exact::new(self.value * other.value, self.pi_power + other.pi_power)
    }

    pub fn scale(&self, r: Rational) -> Exact {
        Exact::new(self.value * r, self.pi_power)
    }

    pub fn times(&self, k: i64) -> Exact {
        self.scale(Rational::from_integer(k))
    }

    pub fn try_div(&self, other: &Exact) -> Result<Exact> {
        if other.is_zero() {
            return Err(Error::Argument("division by zero".into()));
        }
        Ok(Exact::new(self.value / other.value, self.pi_power - other.pi_power))
    }

    pub fn is_positive(&self) -> bool {
        self.value.is_positive()
    }

    pub fn try_min(&self, other: &Exact) -> Result<Exact> {
        Ok(if self.try_cmp(other)? == Ordering::Greater { *other } else { *self })
    }

    pub fn try_max(&self, other: &Exact) -> Result<Exact> {
        Ok(if self.try_cmp(other)? == Ordering::Less { *other } else { *self })
    }
}

impl fmt::Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (n, d) = (*self.value.numer(), *self.value.denom());
        let coeff = if d == 1 { format!("{n}") } else { format!("{n}/{d}") };
        match self.pi_power {
            0 => write!(f, "{coeff}"),
            1 if n == 1 && d == 1 => write!(f, "pi"),
            1 => write!(f, "{coeff}*pi"),
            p => write!(f, "{coeff}*pi^{p}"),
        }
    }
}

fn parse_rational(s: &str) -> Result<Rational> {
    let bad = || Error::Argument(format!("cannot parse rational '{s}'"));
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let a = parse_rational(a)?;
        let b = parse_rational(b)?;
        if b.is_zero() {
            return Err(bad());
        }
        return Ok(a / b);
    }
    if let Some((int, frac)) = s.split_once('.') {
        let neg = int.trim_start().starts_with('-');
        let ip: i64 = if int.is_empty() || int == "-" { 0 } else { int.parse().map_err(|_| bad())? };
        if frac.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) || frac.len() > 15 {
            return Err(bad());
        }
        let den = 10i64.pow(frac.len() as u32);
        let fp: i64 = frac.parse().map_err(|_| bad())?;
        let mag = Rational::from_integer(ip.abs()) + Rational::new(fp, den);
        return Ok(if neg { -mag } else { mag });
    }
    s.parse::<i64>().map(Rational::from_integer).map_err(|_| bad())
}

impl FromStr for Exact {
    type Err = Error;

    /// Accepts `3`, `3/2`, `1.02`, `pi`, `2pi`, `pi/2`, `3pi/4`, `1.02*pi`.
    fn from_str(s: &str) -> Result<Exact> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let t = t.replace('π', "pi").to_ascii_lowercase();
        if let Some((pre, post)) = t.split_once("pi") {
            let pre = pre.trim_end_matches('*');
            let coeff = if pre.is_empty() { Rational::one() } else { parse_rational(pre)? };
            let coeff = if post.is_empty() {
                coeff
            } else if let Some(d) = post.strip_prefix('/') {
                let d = parse_rational(d)?;
                if d.is_zero() {
                    return Err(Error::Argument(format!("cannot parse '{s}'")));
                }
                coeff / d
            } else {
                return Err(Error::Argument(format!("cannot parse '{s}'")));
            };
            Ok(Exact::new(coeff, 1))
        } else {
            Ok(Exact::new(parse_rational(&t)?, 0))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum TableKind {
    Ehgh,
    Ech,
    LowerK,
    UpperK,
}

/// Capacity values indexed by `k`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CapacityTable {
    pub kind: TableKind,
    pub domain: String,
    pub values: Vec<(usize, Exact)>,
}

impl CapacityTable {
    /// Values are non-negative and non-decreasing in `k`.
    pub fn check(&self) -> Result<()> {
        for w in self.values.windows(2) {
            if w[0].1.try_cmp(&w[1].1)? == Ordering::Greater {
                return Err(Error::Precondition(format!("table not monotone at k = {}", w[1].0)));
            }
        }
        if self.values.iter().any(|(_, v)| v.value.is_negative()) {
            return Err(Error::Precondition("negative capacity".into()));
        }
        Ok(())
    }
}

fn common_unit(a: &[Exact]) -> Result<i32> {
    let p = a[0].pi_power;
    for x in a {
        if x.pi_power != p {
            return Err(Error::MixedUnits(p, x.pi_power));
        }
    }
    Ok(p)
}

fn floor_div(x: Rational, a: Rational) -> i64 {
    (x / a).floor().to_integer()
}

/// `k`-th smallest element (with repetitions) of `{h a_j : h >= 1}`.
pub fn ehgh_capacity(e: &Ellipsoid, k: usize) -> Result<Exact> {
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    let a = e.a();
    let p = common_unit(a)?;
    let amin = a.iter().map(|x| x.value).min().unwrap_or_else(Rational::one);
    // k * min(a) already has at least k elements below it.
    let target = amin * Rational::from_integer(k as i64);
    let mut items: Vec<Rational> = Vec::new();
    for x in a {
        let hmax = floor_div(target, x.value);
        for h in 1..=hmax {
            items.push(x.value * Rational::from_integer(h));
        }
    }
    items.sort();
    Ok(Exact::new(items[k - 1], p))
}

/// Floating-point version of [`ehgh_capacity`] for real parameters.
pub fn ehgh_capacity_f64(a: &[f64], k: usize) -> Result<f64> {
    if k == 0 || a.is_empty() || a.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::Argument("need k >= 1 and positive parameters".into()));
    }
    let amin = a.iter().cloned().fold(f64::INFINITY, f64::min);
    let target = amin * k as f64 * (1.0 + 1e-12);
    let mut items: Vec<f64> = Vec::new();
    for &x in a {
        let hmax = (target / x).floor() as usize;
        items.extend((1..=hmax).map(|h| h as f64 * x));
    }
    items.sort_by(|x, y| x.partial_cmp(y).unwrap_or(Ordering::Equal));
    Ok(items[k - 1])
}

/// `k * min(a, b)`.
pub fn polydisk_ehgh(p: &Polydisk, k: usize) -> Result<Exact> {
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    Ok(p.a.try_min(&p.b)?.times(k as i64))
}

/// `c_k = (k+1)`-th smallest element of `{h a + j b : h, j >= 0}` for `k = 0..=k_max`.
pub fn ech_capacities_ellipsoid(a: Exact, b: Exact, k_max: usize) -> Result<CapacityTable> {
    let p = common_unit(&[a, b])?;
    if !a.is_positive() || !b.is_positive() {
        return Err(Error::Argument("ellipsoid parameters must be positive".into()));
    }
    let m = a.value.min(b.value);
    let target = m * Rational::from_integer(k_max as i64);
    let mut items = Vec::new();
    for h in 0..=floor_div(target, a.value) {
        let base = a.value * Rational::from_integer(h);
        for j in 0..=floor_div(target - base, b.value) {
            items.push(base + b.value * Rational::from_integer(j));
        }
    }
    items.sort();
    Ok(CapacityTable {
        kind: TableKind::Ech,
        domain: format!("E({a},{b})"),
        values: (0..=k_max).map(|k| (k, Exact::new(items[k], p))).collect(),
    })
}

/// `c_k = min{ a m + b n : (m+1)(n+1) >= k+1 }` for `k = 0..=k_max`.
pub fn ech_capacities_polydisk(a: Exact, b: Exact, k_max: usize) -> Result<CapacityTable> {
    let p = common_unit(&[a, b])?;
    if !a.is_positive() || !b.is_positive() {
        return Err(Error::Argument("polydisk parameters must be positive".into()));
    }
    let mut values = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max as i64 {
        let mut best: Option<Rational> = None;
        for m in 0..=k {
            // smallest n with (m+1)(n+1) >= k+1
            let n = ((k + 1) + m) / (m + 1) - 1;
            let v = a.value * Rational::from_integer(m) + b.value * Rational::from_integer(n);
            best = Some(best.map_or(v, |x| x.min(v)));
        }
        values.push((k as usize, Exact::new(best.unwrap_or_else(Rational::zero), p)));
    }
    Ok(CapacityTable { kind: TableKind::Ech, domain: format!("P({a},{b})"), values })
}

/// `(c_k(E(1,2)), k)`: the extreme values of `k`-normalized capacities on `P(1,1)`.
pub fn polydisk_k_bounds(k: usize) -> Result<(Exact, Exact)> {
    let e = Ellipsoid::new(alloc::vec![Exact::int(1), Exact::int(2)])?;
    Ok((ehgh_capacity(&e, k)?, Exact::int(k as i64)))
}

pub fn ehgh_table(e: &Ellipsoid, k_max: usize) -> Result<CapacityTable> {
    let values = (1..=k_max).map(|k| Ok((k, ehgh_capacity(e, k)?))).collect::<Result<Vec<_>>>()?;
    Ok(CapacityTable { kind: TableKind::Ehgh, domain: e.to_string(), values })
}

pub fn polydisk_ehgh_table(p: &Polydisk, k_max: usize) -> Result<CapacityTable> {
    let values = (1..=k_max).map(|k| Ok((k, polydisk_ehgh(p, k)?))).collect::<Result<Vec<_>>>()?;
    Ok(CapacityTable { kind: TableKind::Ehgh, domain: p.to_string(), values })
}

/// Both bound tables of `P(1,1)` for `k = 1..=k_max`.
pub fn polydisk_bound_tables(k_max: usize) -> Result<(CapacityTable, CapacityTable)> {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for k in 1..=k_max {
        let (l, u) = polydisk_k_bounds(k)?;
        lo.push((k, l));
        hi.push((k, u));
    }
    let d = String::from("P(1,1)");
    Ok((
        CapacityTable { kind: TableKind::LowerK, domain: d.clone(), values: lo },
        CapacityTable { kind: TableKind::UpperK, domain: d, values: hi },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ViterboReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub equality_gap: f64,
}

/// Evaluates `c^n <= n! vol`.
pub fn viterbo_check(domain: &Domain, c_value: f64) -> Result<ViterboReport> {
    if !(c_value >= 0.0) {
        return Err(Error::Argument("capacity value must be non-negative".into()));
    }
    let n = domain.dimension();
    let vol = domain.volume()?;
    Ok(viterbo_from_volume(n, vol, c_value))
}

pub fn viterbo_from_volume(n: usize, vol: f64, c_value: f64) -> ViterboReport {
    let fact: f64 = (1..=n).map(|i| i as f64).product();
    let lhs = c_value.powi(n as i32);
    let rhs = fact * vol;
    ViterboReport { lhs, rhs, holds: lhs <= rhs * (1.0 + 1e-12), equality_gap: rhs - lhs }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct C2Scan {
    pub argmax_ratio: f64,
    pub profile: Vec<(f64, f64)>,
}

/// Second capacity of `E(a, r a)` rescaled to the given volume, over ratios `r`.
pub fn c2_maximizer_scan(volume_level: f64, grid: &[f64]) -> Result<C2Scan> {
    if grid.is_empty() {
        return Err(Error::Argument("empty ratio grid".into()));
    }
    if !(volume_level > 0.0) || grid.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Argument("volume and ratios must be positive".into()));
    }
    let mut profile = Vec::with_capacity(grid.len());
    for &r in grid {
        let a = (2.0 * volume_level / r).sqrt();
        profile.push((r, ehgh_capacity_f64(&[a, r * a], 2)?));
    }
    let mut best = profile[0];
    for &p in &profile[1..] {
        if p.1 > best.1 * (1.0 + 1e-12) {
            best = p;
        }
    }
    Ok(C2Scan { argmax_ratio: best.0, profile })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ell(a: &[i64]) -> Ellipsoid {
        Ellipsoid::new(a.iter().map(|&x| Exact::int(x)).collect()).unwrap()
    }

    #[test]
    fn parse_forms() {
        assert_eq!("3/2".parse::<Exact>().unwrap(), Exact::ratio(3, 2));
        assert_eq!("pi/2".parse::<Exact>().unwrap(), Exact::new(Rational::new(1, 2), 1));
        assert_eq!("3pi/4".parse::<Exact>().unwrap(), Exact::new(Rational::new(3, 4), 1));
        assert_eq!("1.02*pi".parse::<Exact>().unwrap(), Exact::new(Rational::new(51, 50), 1));
        assert_eq!("-0.5".parse::<Exact>().unwrap(), Exact::ratio(-1, 2));
        assert!("pix".parse::<Exact>().is_err());
        assert_eq!(Exact::new(Rational::new(3, 4), 1).to_string(), "3/4*pi");
    }

    #[test]
    fn ordering_formula_small_cases() {
        let e = ell(&[1, 2]);
        let got: Vec<i64> = (1..=6).map(|k| *ehgh_capacity(&e, k).unwrap().value.numer()).collect();
        assert_eq!(got, vec![1, 2, 2, 3, 4, 4]);
        let half = Ellipsoid::new(vec![Exact::pi(), Exact::new(Rational::new(1, 2), 1)]).unwrap();
        assert_eq!(ehgh_capacity(&half, 2).unwrap(), Exact::pi());
        assert!(ehgh_capacity(&e, 0).is_err());
    }

    #[test]
    fn mixed_units_rejected() {
        assert!(Ellipsoid::new(vec![Exact::pi(), Exact::int(1)]).is_err());
        assert!(Exact::pi().try_cmp(&Exact::int(3)).is_err());
        assert!(Exact::zero().try_cmp(&Exact::pi()).is_ok());
    }

    #[test]
    fn ech_small_tables() {
        let t = ech_capacities_ellipsoid(Exact::int(1), Exact::int(1), 3).unwrap();
        let v: Vec<i64> = t.values.iter().map(|(_, x)| *x.value.numer()).collect();
        assert_eq!(v, vec![0, 1, 1, 2]);
        t.check().unwrap();
    }

    #[test]
    fn c2_scan_peaks_at_two() {
        let s = c2_maximizer_scan(1.0, &[1.0, 1.5, 2.0, 2.5, 3.0]).unwrap();
        assert_eq!(s.argmax_ratio, 2.0);
        assert!(c2_maximizer_scan(1.0, &[]).is_err());
    }
}
