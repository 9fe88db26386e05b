//! Fractional Laplacian with mixed nonlocal Dirichlet–Neumann conditions:
//! Hardy constants, their discrete eigenproblems, attainability diagnostics
//! and semilinear minimization on labeled Cartesian grids.

#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod attainability;
pub mod cli;
pub mod constants;
pub mod error;
pub mod geometry;
pub mod inequalities;
pub mod kernel;
pub mod output;
pub mod quadrature;
pub mod semilinear;
pub mod spectral;

pub use error::{Error, Result};
