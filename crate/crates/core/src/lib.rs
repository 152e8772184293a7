//! Bounds-preserving finite elements on triangles.
//!
//! Continuous Bernstein elements of degree 1 to 3 discretize diffusion and
//! convection-diffusion problems; pointwise bounds are enforced by
//! constraining the Bernstein control net and solving a box-constrained
//! linear variational inequality instead of a linear system.
//!
//! The runnable programs under `examples/` walk through each capability.

pub mod approx;
pub mod assembly;
pub mod bernstein;
pub mod benchmarks;
pub mod error;
pub mod experiments;
pub mod mesh;
pub mod quadrature;
pub mod space;
pub mod sparse;
pub mod time;
pub mod vi;

pub use error::{Error, Result};
