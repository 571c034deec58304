//! Numerical laboratory for degenerate parabolic Bellman–Isaacs equations
//! with quadratic Hamiltonians and quadratically growing solutions.

pub mod barriers;
pub mod error;
pub mod mc;
pub mod model;
pub mod presets;
pub mod quadrature;
pub mod riccati;
pub mod solver;
pub mod verification;

pub use error::{Error, Result};
