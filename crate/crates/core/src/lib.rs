//! Simulation of the ideal Poisson-Voronoi tessellation of `H2 x H2` with the
//! L1 metric.
//!
//! * [`hyperbolic`]: one hyperbolic plane, both models, Poisson kernels.
//! * [`product`]: the product space, its ball volume, Poisson sampling and isometries.
//! * [`corona`]: corona point process, separations, cells and no-man's-land.
//! * [`finite`]: finite-intensity Voronoi diagrams and delay convergence.
//! * [`crosses`]: hyperbolic crosses, deposition and coverage on the boundary plane.
//! * [`field`]: separation field seen from a traveling point, limit field, tie-break.
//! * [`stats`], [`rng`]: shared statistical tests and reproducible streams.

pub mod corona;
pub mod crosses;
pub mod error;
pub mod field;
pub mod finite;
pub mod hyperbolic;
pub mod product;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
