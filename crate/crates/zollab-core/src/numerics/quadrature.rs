//! Quadrature rules on `S^3`, disks and `T x disk`.
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use super::s3::{from_hopf, P4};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 0 {
                break;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x.push(z);
        w.push(2.0 / ((1.0 - z * z) * dp * dp));
    }
    (x, w)
}

/// Generic rule: nodes as coordinate vectors, positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn total_measure(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// `sum_i w_i f(node_i)`.
pub fn quadrature<F: Fn(&[f64]) -> f64>(f: F, rule: &QuadratureRule) -> f64 {
    rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * f(x)).sum()
}

/// Product rule on `S^3` in Hopf coordinates
/// `z = (cos eta e^{i sigma}, sin eta e^{i(sigma - delta)})` for the measure
/// `alpha_0 ^ d alpha_0 = (1/2) sin eta cos eta d eta d delta d sigma`.
///
/// `sigma` is the fiber angle of the round Reeb flow, so averaging over the
/// `sigma` index is an exact fiber average on the grid.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SphereGrid {
    pub n_eta: usize,
    pub n_delta: usize,
    pub n_sigma: usize,
    eta: Vec<f64>,
    eta_w: Vec<f64>,
}

impl SphereGrid {
    pub fn new(n_eta: usize, n_delta: usize, n_sigma: usize) -> Self {
        let (x, w) = gauss_legendre(n_eta);
        let half = PI / 4.0;
        let mut eta = Vec::with_capacity(n_eta);
        let mut eta_w = Vec::with_capacity(n_eta);
        for (xi, wi) in x.iter().zip(&w) {
            let e = half * (xi + 1.0);
            eta.push(e);
            eta_w.push(half * wi * 0.5 * e.sin() * e.cos());
        }
        SphereGrid { n_eta, n_delta, n_sigma, eta, eta_w }
    }

    /// Default production grid.
    pub fn standard() -> Self {
        SphereGrid::new(24, 32, 32)
    }

    pub fn len(&self) -> usize {
        self.n_eta * self.n_delta * self.n_sigma
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn eta(&self, i: usize) -> f64 {
        self.eta[i]
    }

    pub fn delta(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.n_delta as f64
    }

    pub fn sigma(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.n_sigma as f64
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> P4 {
        from_hopf(self.eta[i], self.delta(j), self.sigma(k))
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.eta_w[i] * (2.0 * PI / self.n_delta as f64) * (2.0 * PI / self.n_sigma as f64)
    }

    /// Total weight of one base cell (all fiber nodes over `(i, j)`).
    pub fn base_weight(&self, i: usize) -> f64 {
        self.weight(i) * self.n_sigma as f64
    }

    pub fn integrate<F: Fn(&P4) -> f64>(&self, f: F) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n_eta {
            let mut si = 0.0;
            for j in 0..self.n_delta {
                for k in 0..self.n_sigma {
                    si += f(&self.node(i, j, k));
                }
            }
            s += si * self.weight(i);
        }
        s
    }

    /// Iterates over `(node, weight)`.
    pub fn nodes(&self) -> impl Iterator<Item = (P4, f64)> + '_ {
        (0..self.n_eta).flat_map(move |i| {
            (0..self.n_delta).flat_map(move |j| {
                (0..self.n_sigma).map(move |k| (self.node(i, j, k), self.weight(i)))
            })
        })
    }

    pub fn rule(&self) -> QuadratureRule {
        let (nodes, weights) = self.nodes().map(|(z, w)| (z.to_vec(), w)).unzip();
        QuadratureRule { nodes, weights }
    }
}

/// Polar rule on the disk of radius `radius` for the area form.
#[derive(Debug, Clone, PartialEq)]
pub struct DiskRule {
    pub radius: f64,
    pub n_r: usize,
    pub n_theta: usize,
}

impl DiskRule {
    pub fn new(radius: f64, n_r: usize, n_theta: usize) -> Self {
        DiskRule { radius, n_r, n_theta }
    }

    pub fn nodes(&self) -> Vec<([f64; 2], f64)> {
        let (x, w) = gauss_legendre(self.n_r);
        let mut out = Vec::with_capacity(self.n_r * self.n_theta);
        let dth = 2.0 * PI / self.n_theta as f64;
        for (xi, wi) in x.iter().zip(&w) {
            let r = 0.5 * self.radius * (xi + 1.0);
            let wr = 0.5 * self.radius * wi * r * dth;
            for k in 0..self.n_theta {
                let th = dth * k as f64;
                out.push(([r * th.cos(), r * th.sin()], wr));
            }
        }
        out
    }

    pub fn integrate<F: Fn(f64, f64) -> f64>(&self, f: F) -> f64 {
        self.nodes().iter().map(|(p, w)| w * f(p[0], p[1])).sum()
    }
}

/// Rule on `T x disk` with `T = R/Z` (trapezoid in `t`).
#[derive(Debug, Clone, PartialEq)]
pub struct TorusDiskRule {
    pub n_t: usize,
    pub disk: DiskRule,
}

impl TorusDiskRule {
    pub fn new(n_t: usize, disk: DiskRule) -> Self {
        TorusDiskRule { n_t, disk }
    }

    pub fn integrate<F: Fn(f64, f64, f64) -> f64>(&self, f: F) -> f64 {
        let nodes = self.disk.nodes();
        let mut s = 0.0;
        for m in 0..self.n_t {
            let t = m as f64 / self.n_t as f64;
            for (p, w) in &nodes {
                s += w * f(t, p[0], p[1]);
            }
        }
        s / self.n_t as f64
    }

    pub fn rule(&self) -> QuadratureRule {
        let nodes = self.disk.nodes();
        let mut out = QuadratureRule { nodes: Vec::new(), weights: Vec::new() };
        for m in 0..self.n_t {
            let t = m as f64 / self.n_t as f64;
            for (p, w) in &nodes {
                out.nodes.push(alloc::vec![t, p[0], p[1]]);
                out.weights.push(w / self.n_t as f64);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::s3::u1;

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(6);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((s - 2.0 / 11.0).abs() < 1e-14);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn sphere_measure_and_moments() {
        let g = SphereGrid::new(12, 8, 8);
        assert!((g.integrate(|_| 1.0) - PI * PI).abs() < 1e-12);
        assert!((g.integrate(u1) - PI * PI / 2.0).abs() < 1e-12);
        let r = g.rule();
        assert!((r.total_measure() - PI * PI).abs() < 1e-12);
        assert!(r.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn disk_area() {
        let d = DiskRule::new(0.7, 10, 16);
        assert!((d.integrate(|_, _| 1.0) - PI * 0.49).abs() < 1e-13);
        let td = TorusDiskRule::new(4, d);
        assert!((td.rule().total_measure() - PI * 0.49).abs() < 1e-13);
    }
}
