//! Desk-scale workbench for perturbation theory of finite-dimensional
//! operator algebras.
//!
//! The crate builds virtual diagonals for semisimple matrix algebras,
//! corrects approximately multiplicative maps into exact homomorphisms,
//! produces intertwiners for neighboring representations, and runs the full
//! near-inclusion pipeline that certifies a similarity `S A S⁻¹ ⊂ N` with
//! explicit norm bounds. Every quantity that feeds a hypothesis is a
//! certified upper bound; every conclusion is re-checked directly on
//! matrices and recorded in a machine-readable certificate.

pub mod algebra;
pub mod diagonal;
pub mod error;
pub mod exec;
pub mod johnson;
pub mod maps;
pub mod matrix;
pub mod scenario;
pub mod similarity;
pub mod tol;

pub use algebra::FdAlgebra;
pub use diagonal::TensorElement;
pub use error::{Error, Result};
pub use maps::{AlgebraMap, Bracket, ProjectionOnto};
pub use matrix::{C64, ComplexMatrix};
