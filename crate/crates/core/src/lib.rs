//! Numerical toolkit for McKean-Vlasov stochastic differential equations.

pub mod coefficients;
pub mod error;
pub mod kernels;
pub mod lions;
pub mod measures;
pub mod numeric;
pub mod parametrix;
pub mod pde;
pub mod picard;
pub mod quadrature;
pub mod scalar;
pub mod simulate;

pub use error::{Error, Result};
pub use scalar::Real;

pub type CovMatrixF64 = kernels::CovMatrix<f64>;
pub type CovMatrixF32 = kernels::CovMatrix<f32>;
pub type EmpiricalMeasureF64 = measures::EmpiricalMeasure<f64>;
pub type EmpiricalMeasureF32 = measures::EmpiricalMeasure<f32>;
pub type DensityGridF64 = measures::DensityGrid<f64>;
pub type DensityGridF32 = measures::DensityGrid<f32>;
pub type GridSpecF64 = measures::GridSpec<f64>;
