//! Numerical and exact tools for symplectic capacities and Reeb dynamics
//! near the round ball in `C^2`.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command
//! line runner and parallel sweeps live in the companion `zollab` crate.
//!
//! Conventions used throughout:
//!
//! * `lambda_0 = 1/2 sum (x dy - y dx)`, `omega_0 = sum dx ^ dy`.
//! * Hamiltonian fields satisfy `i_X omega = dH`, so `X_H = -i grad H`.
//! * Points of `S^3` are unit vectors `[x1, y1, x2, y2]` of `R^4`.
//!
//! ```
//! use zollab_core::capacities::{ehgh_table, Exact};
//! use zollab_core::domains::{ellipsoid_amplitude, Ellipsoid};
//! use zollab_core::reeb::{systolic_ratio, SystoleSearch};
//!
//! let e = Ellipsoid::new(vec![Exact::int(1), Exact::int(2)])?;
//! let table = ehgh_table(&e, 6)?;
//! let values: Vec<Exact> = table.values.iter().map(|(_, v)| *v).collect();
//! assert_eq!(values, [1, 2, 2, 3, 4, 4].map(Exact::int));
//!
//! let pi = core::f64::consts::PI;
//! let rep = systolic_ratio(&ellipsoid_amplitude(1.02 * pi, 0.98 * pi)?, &SystoleSearch::default())?;
//! assert!((rep.ratio - 0.98 / 1.02).abs() < 1e-6);
//! # Ok::<(), zollab_core::Error>(())
//! ```
#![no_std]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::manual_is_multiple_of)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod anosov_katok;
pub mod capacities;
pub mod counterexamples;
pub mod domains;
pub mod error;
pub mod genfun;
pub mod lift;
pub mod numerics;
pub mod reeb;
pub mod spectral;

pub use error::{Error, Result};
