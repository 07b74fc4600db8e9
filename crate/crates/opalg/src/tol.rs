//! Numerical tolerances used across the crate.
//!
//! Conventions: quantities that feed a theorem premise are always *certified
//! upper bounds* (loose is sound, tight is better); conclusion residuals are
//! computed directly on matrices and compared against the constants below.

/// Frobenius-distance tolerance for span membership tests.
pub const SPAN_MEMBERSHIP: f64 = 1e-10;

/// Relative singular-value gate below which a matrix is treated as singular.
pub const SINGULARITY_REL: f64 = 1e-10;

/// Residual under which a map counts as an exact algebra homomorphism.
pub const HOMOMORPHISM_DEFECT: f64 = 1e-9;

/// Residual under which a tensor element passes the diagonal axioms.
pub const DIAGONAL_RESIDUAL: f64 = 1e-9;

/// Conjugation residual accepted for the near-inclusion conclusion.
pub const CONJUGATION_RESIDUAL: f64 = 1e-8;

/// Membership residual for operators required to lie in a generated algebra.
pub const MEMBERSHIP_RESIDUAL: f64 = 1e-8;

/// Default target defect for the homomorphism correction loop.
pub const CORRECTION_TOL: f64 = 1e-10;

/// Additive slack when checking a computed quantity against a paper bound.
pub const BOUND_SLACK: f64 = 1e-9;

/// Tolerance for unitality checks on maps.
pub const UNITALITY: f64 = 1e-10;
