//! # critflow
//!
//! A pseudo-spectral numerical laboratory for stationary Navier-Stokes
//! solutions with critically singular forcing on a periodic box, together
//! with the capacitary function-space machinery used to analyze them.
//!
//! The library builds up in layers:
//!
//! - [`grid`] / [`spectral`] — the periodic box, its Fourier dual, and a
//!   multiplier calculus (fractional Laplacian, Riesz transforms, Leray
//!   projection, dealiased products).
//! - [`potential`] — Riesz potentials, the Hardy-Littlewood maximal
//!   function, and the variational capacity of compact sets (analytic for
//!   balls, projected-SOR obstacle problem for general masks).
//! - [`norms`] — Morrey norms and three estimators of the capacitary
//!   norm, plus Sobolev-embedding and Hoelder-product inequality checkers.
//! - [`stationary`] — Picard iteration for the stationary problem
//!   `U = B(U,U) + U0`, with manufactured-solution verification.
//! - [`operator`] — the perturbed operator `A = -Laplacian + B_U`, its
//!   resolvent via a Von Neumann series, sector decay scans, and the
//!   Dunford-integral semigroup with an independent exponential-integrator
//!   oracle.
//! - [`stability`] — mild-solution evolution of a perturbation by two
//!   independent schemes and the weighted decay functionals.
//! - [`scenarios`] / [`config`] / [`io`] — reproducible batch experiments,
//!   key = value configuration, and the VFLD1/MASK1/CSV file formats.
//!
//! Each major capability has a runnable example under `examples/`; start
//! with `spectral_basics` and work down the list in the README. The
//! `critflow` binary exposes the same scenarios for batch use.

pub mod config;
pub mod error;
pub mod fit;
pub mod grid;
pub mod io;
pub mod norms;
pub mod operator;
pub mod potential;
pub mod profiles;
pub mod rng;
pub mod scenarios;
pub mod spectral;
pub mod stability;
pub mod stationary;

pub use error::{Error, Result};
pub use grid::{Grid, Rank, RealField, SpectralField};
