//! Reflecting diffusions generated by L_t = Δ_t + Z_t on manifolds carrying a time-dependent
//! metric g_t: geometry in a single chart, path simulation with boundary local time, Bismut
//! gradient estimators, couplings, Girsanov Harnack machinery, and a battery of numerical checks.

pub mod catalog;
pub mod coupling;
pub mod derivative;
pub mod diffusion;
mod error;
pub mod geometry;
pub mod harnack;
pub mod linalg;
pub mod oracle;
pub mod quad;
pub mod report;
pub mod rng;
pub mod stats;
pub mod suite;
pub mod verify;

pub use error::{Error, Result};

pub type Vector<const D: usize> = nalgebra::SVector<f64, D>;
pub type Matrix<const D: usize> = nalgebra::SMatrix<f64, D, D>;
