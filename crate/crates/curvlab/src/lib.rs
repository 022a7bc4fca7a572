//! Numerical laboratory for curvature estimates on asymptotically flat
//! initial data sets.
//!
//! Pipeline: analytic initial-data generators produce discretized `(g, h)`
//! pairs on a Cartesian grid; ADM charges are read off from extrapolated
//! surface integrals; the hypersurface Dirac boundary-value problem is solved
//! for a basis of Witten spinors; and the lemma-level identities and
//! inequalities relating the energy, the spinor operator and the restricted
//! curvature tensor are evaluated with explicit margins.

pub mod datasets;
pub mod error;
pub mod geometry;
pub mod adm;
pub mod clifford;
pub mod grid;
pub mod solver;

pub use error::{CurvError, Result};
