//! Guaranteed lower bounds for PDE eigenvalues from dual mixed finite
//! elements, with conforming P1 upper bounds alongside.
//!
//! The pipeline is: build a [`mesh::Mesh`], assemble Raviart–Thomas/P0
//! operators ([`assemble`]), solve the discrete eigenproblem
//! ([`spectra`]), and turn the discrete eigenvalue into a certified lower
//! bound with an explicit mesh constant ([`bounds`]).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assemble;
pub mod bounds;
pub mod mesh;
pub mod quadrature;
pub mod sparse;
pub mod spectra;

pub use assemble::{CoefficientField, DofMap, P1Kind};
pub use bounds::{BoundReport, DeltaBound};
pub use mesh::{BuiltinMesh, Mesh, Point2};
pub use sparse::SparseMatrix;
pub use spectra::{SolveOptions, SpectrumResult};
