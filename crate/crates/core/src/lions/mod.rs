//! Derivatives on the space of probability measures: flat derivatives by
//! convex perturbation, Lions derivatives by empirical lifting, and the
//! derivative of `μ ↦ h(Θ(t, μ))` along a decoupled flow.

mod composition;
mod functionals;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{EmpiricalMeasure, Measure};
use crate::numeric::exact_sum;

pub use composition::{
    composed_flow_derivative, composed_flow_time_derivative, ComposedFunctional, DensityProvider, FlowComposition,
    HeatDensity, ParametrixDensity,
};
pub use functionals::{
    functional_by_name, mean_squared, second_moment, sin_integral, Constant, DriftFunctional, Integral, MeanSquared,
    OuterIntegral, FUNCTIONAL_NAMES,
};

/// Default convex-perturbation size for flat derivatives.
pub const FLAT_EPS: f64 = 1e-4;
/// Relative step of the lifted central difference: `δ = LIFT_STEP (1 + |x_i|)`.
pub const LIFT_STEP: f64 = 1e-4;
/// Relative step of the `y`-difference of flat derivatives.
const Y_STEP: f64 = 1e-3;

/// A real functional `h: 𝒫₂(ℝᵈ) → ℝ`.
pub trait MeasureFunctional: Send + Sync {
    fn name(&self) -> &str;

    fn eval(&self, mu: &Measure) -> Result<f64>;

    /// Analytic `δh/δm(μ)(y)` normalized to `μ`-mean zero, when known.
    fn flat_derivative(&self, _mu: &Measure, _y: &[f64]) -> Result<Option<f64>> {
        Ok(None)
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Usage(format!("perturbation size must lie in (0, 1), got {eps}")));
    }
    Ok(())
}

/// `[h((1-ε)μ + εδ_y) - h(μ)] / ε`, without the normalization.
pub(crate) fn raw_flat(h: &dyn MeasureFunctional, cloud: &EmpiricalMeasure<f64>, h0: f64, y: &[f64], eps: f64) -> Result<f64> {
    let mixed = Measure::Empirical(cloud.mix_dirac(eps, y)?);
    Ok((h.eval(&mixed)? - h0) / eps)
}

/// Flat derivative by convex perturbation, re-centered by subtracting its
/// `μ`-average so that `∫ δh/δm(μ)(y) μ(dy) = 0`. Costs one evaluation of
/// `h` per atom of `μ`.
pub fn flat_derivative_fd(h: &dyn MeasureFunctional, mu: &Measure, y: &[f64], eps: f64) -> Result<f64> {
    check_eps(eps)?;
    if y.len() != mu.dim() {
        return Err(Error::Usage("point dimension does not match the measure".into()));
    }
    let cloud = mu.to_empirical()?;
    let h0 = h.eval(&Measure::Empirical(cloud.as_ref().clone()))?;
    let at_y = raw_flat(h, &cloud, h0, y, eps)?;
    let mut terms = Vec::with_capacity(cloud.len());
    for (p, w) in cloud.iter() {
        terms.push(w * raw_flat(h, &cloud, h0, p, eps)?);
    }
    Ok(at_y - exact_sum(terms))
}

/// Estimate of `∂_μ h(μ)(x_i)` as `N ∂_{x_i} h(μ_N)` for a uniform cloud,
/// by central differences with one Richardson level. `delta` overrides the
/// default step `1e-4 (1 + |x_i|)`.
pub fn lions_derivative_empirical(
    h: &dyn MeasureFunctional,
    mu: &EmpiricalMeasure<f64>,
    i: usize,
    delta: Option<f64>,
) -> Result<Vec<f64>> {
    if !mu.is_uniform() {
        return Err(Error::Usage("empirical lifting needs equal weights".into()));
    }
    if i >= mu.len() {
        return Err(Error::Usage(format!("atom {i} out of range for {} atoms", mu.len())));
    }
    let n = mu.len() as f64;
    let x = mu.point(i).to_vec();
    let mut out = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let step = delta.unwrap_or(LIFT_STEP * (1.0 + x[k].abs()));
        if !(step > 0.0) {
            return Err(Error::Usage("lifting step must be positive".into()));
        }
        let diff = |d: f64| -> Result<f64> {
            let mut p = x.clone();
            p[k] = x[k] + d;
            let up = h.eval(&Measure::Empirical(mu.with_point(i, &p)))?;
            p[k] = x[k] - d;
            let down = h.eval(&Measure::Empirical(mu.with_point(i, &p)))?;
            Ok(n * (up - down) / (2.0 * d))
        };
        out.push((4.0 * diff(0.5 * step)? - diff(step)?) / 3.0);
    }
    Ok(out)
}

/// The cloud with an atom at `y` (added with equal weight when absent) and
/// that atom's index.
pub(crate) fn with_atom(mu: &EmpiricalMeasure<f64>, y: &[f64]) -> Result<(EmpiricalMeasure<f64>, usize)> {
    if !mu.is_uniform() {
        return Err(Error::Usage("empirical lifting needs equal weights".into()));
    }
    if let Some(i) = (0..mu.len()).find(|&i| mu.point(i) == y) {
        return Ok((mu.clone(), i));
    }
    let mut pts = mu.points().to_vec();
    pts.extend_from_slice(y);
    Ok((EmpiricalMeasure::uniform(mu.dim(), pts)?, mu.len()))
}

#[derive(Debug, Clone, Serialize)]
pub struct RelationCheck {
    /// `max_k |∂_{y_k} δh/δm(μ)(y) - ∂_μ h(μ)(y)_k|` per sample point.
    pub errors: Vec<f64>,
    pub max_abs_error: f64,
}

/// Checks `∂_y δh/δm(μ)(y) = ∂_μ h(μ)(y)` at each sample point.
///
/// Both sides are evaluated at `μ` with a particle placed at `y`. The
/// `y`-gradient uses the analytic flat derivative when `h` has one and the
/// convex perturbation with one Richardson level otherwise; the constant
/// normalization drops out of the gradient and is skipped.
pub fn check_flat_lions_relation(h: &dyn MeasureFunctional, mu: &EmpiricalMeasure<f64>, ys: &[Vec<f64>]) -> Result<RelationCheck> {
    let mut errors = Vec::with_capacity(ys.len());
    for y in ys {
        if y.len() != mu.dim() {
            return Err(Error::Usage("sample point dimension does not match the measure".into()));
        }
        let (cloud, i) = with_atom(mu, y)?;
        let law = Measure::Empirical(cloud.clone());
        let h0 = h.eval(&law)?;
        let flat = |z: &[f64]| -> Result<f64> {
            match h.flat_derivative(&law, z)? {
                Some(v) => Ok(v),
                None => Ok(2.0 * raw_flat(h, &cloud, h0, z, 0.5 * FLAT_EPS)? - raw_flat(h, &cloud, h0, z, FLAT_EPS)?),
            }
        };
        let lions = lions_derivative_empirical(h, &cloud, i, None)?;
        let mut worst = 0.0f64;
        for k in 0..y.len() {
            let step = Y_STEP * (1.0 + y[k].abs());
            let diff = |d: f64| -> Result<f64> {
                let mut p = y.clone();
                p[k] = y[k] + d;
                let up = flat(&p)?;
                p[k] = y[k] - d;
                Ok((up - flat(&p)?) / (2.0 * d))
            };
            let grad = (4.0 * diff(0.5 * step)? - diff(step)?) / 3.0;
            worst = worst.max((grad - lions[k]).abs());
        }
        errors.push(worst);
    }
    let max_abs_error = errors.iter().fold(0.0f64, |m, e| m.max(*e));
    Ok(RelationCheck { errors, max_abs_error })
}
