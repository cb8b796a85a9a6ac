//! Coefficient models `b(t, x, μ)`, `σ(t, x, μ)`, `a = σσ^T` and their
//! linear functional (flat) derivatives in the measure argument.

mod builders;
pub mod library;
pub mod registry;
mod validate;

use nalgebra::{DMatrix, DVector};

pub use builders::{
    make_first_order, make_local, make_n_order, make_polynomial, make_scalar, FirstOrderModel, LocalModel,
    MultiKernel, NOrderModel, OuterFn, PolynomialModel, ScalarFn, ScalarModel, SigmaFactor, VecKernel,
};
pub use validate::{validate_assumptions, AssumptionReport, ClauseChecks};
pub use registry::{build_model, MODEL_NAMES};

use crate::error::Result;
use crate::measures::Measure;

/// Coefficients with time and measure frozen: functions of the state only.
pub trait FrozenCoefficients: Send + Sync {
    fn dim_x(&self) -> usize;
    fn dim_w(&self) -> usize;

    /// Writes `b(x)` into `out` (length `d`).
    fn drift_into(&self, x: &[f64], out: &mut [f64]);

    /// Writes `σ(x)` row-major into `out` (length `d·q`).
    fn sigma_into(&self, x: &[f64], out: &mut [f64]);

    /// Writes `a(x) = σσ^T` row-major into `out` (length `d·d`).
    fn diffusion_into(&self, x: &[f64], out: &mut [f64]) {
        let (d, q) = (self.dim_x(), self.dim_w());
        let mut s = vec![0.0; d * q];
        self.sigma_into(x, &mut s);
        sigma_to_diffusion(d, q, &s, out);
    }

    fn drift(&self, x: &[f64]) -> DVector<f64> {
        let mut out = vec![0.0; self.dim_x()];
        self.drift_into(x, &mut out);
        DVector::from_vec(out)
    }

    fn sigma(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = vec![0.0; self.dim_x() * self.dim_w()];
        self.sigma_into(x, &mut out);
        DMatrix::from_row_slice(self.dim_x(), self.dim_w(), &out)
    }

    fn diffusion(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim_x();
        let mut out = vec![0.0; d * d];
        self.diffusion_into(x, &mut out);
        DMatrix::from_row_slice(d, d, &out)
    }
}

/// `a = σσ^T` for row-major `σ` of shape `d × q`.
pub fn sigma_to_diffusion(d: usize, q: usize, s: &[f64], out: &mut [f64]) {
    for i in 0..d {
        for j in 0..=i {
            let mut acc = 0.0;
            for k in 0..q {
                acc += s[i * q + k] * s[j * q + k];
            }
            out[i * d + j] = acc;
            out[j * d + i] = acc;
        }
    }
}

/// A McKean-Vlasov coefficient model.
///
/// Evaluation goes through [`CoefficientModel::freeze`], which fixes time
/// and measure once so that models can precompute measure statistics.
pub trait CoefficientModel: Send + Sync {
    fn name(&self) -> &str;
    fn dim_x(&self) -> usize;
    fn dim_w(&self) -> usize;

    /// Fixes `(t, μ)`. Fails with a resource error when integrating against
    /// `μ` would exceed the model's evaluation budget.
    fn freeze<'a>(&'a self, t: f64, law: &'a Measure) -> Result<Box<dyn FrozenCoefficients + 'a>>;

    /// True when `b` and `σ` do not depend on the measure argument.
    fn measure_independent(&self) -> bool {
        false
    }

    /// Flat derivative `δb/δm(t, x, μ)(y)` in the normalized gauge, if available.
    fn flat_drift(&self, _t: f64, _x: &[f64], _law: &Measure, _y: &[f64]) -> Result<Option<DVector<f64>>> {
        Ok(None)
    }

    /// Flat derivative `δσ/δm(t, x, μ)(y)`, if available.
    fn flat_sigma(&self, _t: f64, _x: &[f64], _law: &Measure, _y: &[f64]) -> Result<Option<DMatrix<f64>>> {
        Ok(None)
    }

    /// Flat derivative `δa/δm(t, x, μ)(y) = δσ σ^T + σ δσ^T`, if `δσ/δm` is available.
    fn flat_diffusion(&self, t: f64, x: &[f64], law: &Measure, y: &[f64]) -> Result<Option<DMatrix<f64>>> {
        let Some(ds) = self.flat_sigma(t, x, law, y)? else {
            return Ok(None);
        };
        let s = self.freeze(t, law)?.sigma(x);
        Ok(Some(&ds * s.transpose() + &s * ds.transpose()))
    }

    /// Second flat derivative `δ²a/δm²(t, x, μ)(y, y')`, if available.
    fn flat2_diffusion(
        &self,
        _t: f64,
        _x: &[f64],
        _law: &Measure,
        _y: &[f64],
        _y2: &[f64],
    ) -> Result<Option<DMatrix<f64>>> {
        Ok(None)
    }

    fn drift(&self, t: f64, x: &[f64], law: &Measure) -> Result<DVector<f64>> {
        Ok(self.freeze(t, law)?.drift(x))
    }

    fn sigma(&self, t: f64, x: &[f64], law: &Measure) -> Result<DMatrix<f64>> {
        Ok(self.freeze(t, law)?.sigma(x))
    }

    fn diffusion(&self, t: f64, x: &[f64], law: &Measure) -> Result<DMatrix<f64>> {
        Ok(self.freeze(t, law)?.diffusion(x))
    }
}
