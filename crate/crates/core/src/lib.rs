//! Phase-field approximations of anisotropic perimeter, Willmore and
//! Mumford-Shah energies with curvature penalisation.
//!
//! The crate evaluates the diffuse functionals on uniform grids, builds the
//! explicit recovery fields from sharp curve networks, computes the sharp
//! limit energies those fields should approach, and provides discrete
//! varifold diagnostics and descent solvers.

pub mod anisotropy;
pub mod breakdown;
pub mod error;
pub mod exec;
pub mod field;
pub mod lp;
pub mod minimize;
pub mod phase_energy;
pub mod profiles;
pub mod quad;
pub mod recovery;
pub mod sharp_geometry;
pub mod spatial;
pub mod spline;
pub mod varifold;

pub use error::{Error, Result};
