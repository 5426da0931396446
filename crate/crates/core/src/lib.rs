//! Spectral-Galerkin engine for Floer-type homology of the constrained
//! functional `E(u, lambda) = 1/2 <Du, u> - lambda (int H(x, u) - 1)` over a
//! truncated Dirac-type operator.
//!
//! The crate is organized bottom-up: [`spectral`] holds the operator,
//! [`hamiltonian`] the nonlinearity, [`functional`] the energy and its
//! derivatives, [`critical`] the solvers, [`flow`] trajectories and orbit
//! counts, and [`complex`] the GF(2) chain complexes. [`pipeline`] strings
//! them together for the command-line runner.

pub mod complex;
pub mod config;
pub mod critical;
mod error;
pub mod flow;
pub mod functional;
pub mod gf2;
pub mod hamiltonian;
pub mod pipeline;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64;
