//! Radial laboratory for the singular reaction problem driven by the
//! 1-Laplacian, approached through p-Laplacian continuation as p drops
//! to 1.
//!
//! The crate provides the reaction nonlinearities and data with their
//! truncations, the decreasing-envelope construction and the increasing
//! transform whose gradient stays bounded uniformly in p, closed-form radial
//! solutions with dual-norm certificates, the damped-Newton continuation
//! solver on radial meshes, and the diagnostics that check every discrete
//! residual the limit theory constrains.

pub mod config;
pub mod diagnostics;
pub mod envelope;
mod error;
pub mod mesh;
pub mod nonlinearity;
pub mod oracle;
pub mod runner;
pub mod solver;
pub mod truncations;

pub use error::{Error, Result};
pub use mesh::{FaceField, Grading, RadialMesh, ScalarField};
pub use nonlinearity::{DatumSpec, NonlinearitySpec};
pub use solver::{ContinuationTrace, SolverConfig};
