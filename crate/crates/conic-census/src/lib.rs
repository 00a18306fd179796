//! Arithmetic of conic bundles over P^1: exact isotropic-fibre counting,
//! local-solubility detectors, divisor-sum identities, and sieve weights.
//!
//! The library is organised in layers:
//!
//! - [`arith`]: Jacobi symbols, factorisation, Hensel lifting
//! - [`poly`] / [`forms`]: binary forms, the bundle data, fibre analysis
//! - [`local`]: Hilbert symbols, Hasse-Minkowski, the detector formula,
//!   and the congruence frame
//! - [`densities`]: the multiplicative root-counting functions
//! - [`regions`]: planar lattices and region volumes
//! - [`sums`]: divisor sums and the exact hyperbola/partition identities
//! - [`sieve`]: combinatorial sieve weights and the lower-bound assembly
//! - [`census`]: the exact count N(pi, B) at scale
//! - [`config`] / [`verify`]: the CLI surface

pub mod arith;
pub mod census;
pub mod config;
pub mod densities;
pub mod forms;
pub mod local;
pub mod poly;
pub mod regions;
pub mod sieve;
pub mod sums;
pub mod verify;
