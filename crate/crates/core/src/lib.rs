//! Gridless hybrid-field channel estimation for extremely large antenna arrays.
//!
//! The received channel is a mix of far-field (planar) and near-field (spherical)
//! paths. Far-field paths are line-spectral atoms `d(φ)`; near-field paths are
//! modelled as `d(φ) ⊙ g(ψ)` with the chirp `g(ψ)` confined to a learned subspace.
//! Both components are recovered jointly by minimizing a weighted sum of two atomic
//! norms, posed as a semidefinite program and solved by ADMM.
//!
//! Module map:
//!
//! - [`model`]: array geometry, steering vectors, random channels
//! - [`subspace`]: chirp dictionary and its low-rank basis
//! - [`measurement`]: combiners, noisy observations, the lifting operator
//! - [`solver`]: the conic program and its ADMM solver
//! - [`demix`]: end-to-end channel estimate and NMSE
//! - [`params`]: angle and range extraction from the SDP solution
//! - [`omp`]: two-stage hybrid-field OMP baseline

pub mod demix;
pub mod error;
pub mod linalg;
pub mod measurement;
pub mod model;
pub mod omp;
pub mod params;
pub mod solver;
pub mod subspace;

pub use error::{Error, Result};
pub use linalg::C64;

/// Crate version, recorded in benchmark manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
