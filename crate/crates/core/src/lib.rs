//! Barrier functions, principal-value generator quadrature, exact Lévy-measure
//! geometry and exit-distribution Monte Carlo for the x-dependent rectilinear
//! α-stable process `dX = A(X-) dZ` in balls.

pub mod barrier;
pub mod error;
pub mod exit;
pub mod geometry;
pub mod levy;
pub mod quad;
pub mod report;
pub mod stable;

pub use error::{Error, Result};
