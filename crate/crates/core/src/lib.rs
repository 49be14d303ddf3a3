//! Przanowski form of quaternion-Kähler (anti-self-dual Einstein)
//! four-manifolds: exact jet arithmetic, the tetrad/connection/curvature
//! chain, the Przanowski residual and its linearisation, the Lax pair,
//! twistor line families with Przanowski-function extraction and the
//! recursion/contour machinery, and a Newton solver on a symmetry-reduced
//! grid.
//!
//! Everything is evaluated on the complexified coordinate chart
//! (w, z, w̄, z̄) with reality imposed only when sampling points; jets carry
//! exact derivatives so residuals are limited by rounding, not by
//! finite-difference error.

pub mod expr;
pub mod forms;
pub mod geometry;
pub mod jets;
pub mod lax;
pub mod linalg;
pub mod operators;
pub mod solver;
pub mod twistor;
