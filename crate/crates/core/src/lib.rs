//! Isogeometric (B-Spline) Galerkin discretization of the compressible Euler equations,
//! stabilized by algebraic flux correction of linearized FCT type.
//!
//! The numerical core is generic over the floating point type through [`Real`];
//! the aliases at the crate root fix it to `f64` (what the CLI uses) or `f32`.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod afc;
pub mod assembly;
pub mod bc;
pub mod driver;
pub mod error;
pub mod euler;
pub mod geometry;
pub mod linalg;
pub mod scalar;
pub mod splines;
pub mod timeint;

pub use error::{Error, Result};
pub use scalar::Real;

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;
/// Largest number of conservative variables (`MAX_DIM + 2`).
pub const MAX_VARS: usize = MAX_DIM + 2;

pub type KnotVectorF64 = splines::KnotVector<f64>;
pub type TensorBasisF64 = splines::TensorBasis<f64>;
pub type GeometryMapF64 = geometry::GeometryMap<f64>;
pub type DiscretizationF64 = afc::Discretization<f64>;
pub type SolutionFieldF64 = afc::SolutionField<f64>;
pub type GasModelF64 = euler::GasModel<f64>;

pub type KnotVectorF32 = splines::KnotVector<f32>;
pub type TensorBasisF32 = splines::TensorBasis<f32>;
pub type GeometryMapF32 = geometry::GeometryMap<f32>;
pub type DiscretizationF32 = afc::Discretization<f32>;
pub type SolutionFieldF32 = afc::SolutionField<f32>;
pub type GasModelF32 = euler::GasModel<f32>;
