use std::sync::Arc;

use crate::coefficients::{build_model, CoefficientModel, ScalarFn};
use crate::error::{Error, Result};
use crate::lions::MeasureFunctional;
use crate::measures::Measure;

/// `∫ φ dμ`, with flat derivative `φ(y) - ∫ φ dμ`.
pub struct Integral {
    name: String,
    phi: ScalarFn,
}

impl Integral {
    pub fn new(name: &str, phi: ScalarFn) -> Self {
        Self { name: name.into(), phi }
    }
}

impl MeasureFunctional for Integral {
    fn name(&self) -> &str {
        &self.name
    }

    fn eval(&self, mu: &Measure) -> Result<f64> {
        Ok(mu.integrate(|y| (self.phi)(y)))
    }

    fn flat_derivative(&self, mu: &Measure, y: &[f64]) -> Result<Option<f64>> {
        Ok(Some((self.phi)(y) - self.eval(mu)?))
    }
}

/// `∫ sin(y₁) μ(dy)`.
pub fn sin_integral() -> Integral {
    Integral::new("sin_integral", Arc::new(|y: &[f64]| y[0].sin()))
}

/// `M₂(μ) = ∫ |y|² μ(dy)`.
pub fn second_moment() -> Integral {
    Integral::new("second_moment", Arc::new(|y: &[f64]| y.iter().map(|v| v * v).sum()))
}

/// `|∫ y μ(dy)|²`, with flat derivative `2 m·(y - m)`.
pub struct MeanSquared;

pub fn mean_squared() -> MeanSquared {
    MeanSquared
}

impl MeasureFunctional for MeanSquared {
    fn name(&self) -> &str {
        "mean_squared"
    }

    fn eval(&self, mu: &Measure) -> Result<f64> {
        Ok(mu.mean().iter().map(|m| m * m).sum())
    }

    fn flat_derivative(&self, mu: &Measure, y: &[f64]) -> Result<Option<f64>> {
        let m = mu.mean();
        Ok(Some(m.iter().zip(y).map(|(m, y)| 2.0 * m * (y - m)).sum()))
    }
}

pub struct Constant(pub f64);

impl MeasureFunctional for Constant {
    fn name(&self) -> &str {
        "constant"
    }

    fn eval(&self, _mu: &Measure) -> Result<f64> {
        Ok(self.0)
    }

    fn flat_derivative(&self, _mu: &Measure, _y: &[f64]) -> Result<Option<f64>> {
        Ok(Some(0.0))
    }
}

/// `Φ(∫ ψ dμ)`, with flat derivative `Φ'(∫ψ dμ) (ψ(y) - ∫ψ dμ)`.
pub struct OuterIntegral {
    name: String,
    psi: ScalarFn,
    outer: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    outer_prime: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl OuterIntegral {
    pub fn new(
        name: &str,
        psi: ScalarFn,
        outer: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        outer_prime: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    ) -> Self {
        Self {
            name: name.into(),
            psi,
            outer,
            outer_prime,
        }
    }
}

impl MeasureFunctional for OuterIntegral {
    fn name(&self) -> &str {
        &self.name
    }

    fn eval(&self, mu: &Measure) -> Result<f64> {
        Ok((self.outer)(mu.integrate(|y| (self.psi)(y))))
    }

    fn flat_derivative(&self, mu: &Measure, y: &[f64]) -> Result<Option<f64>> {
        let z = mu.integrate(|y| (self.psi)(y));
        Ok(Some((self.outer_prime)(z) * ((self.psi)(y) - z)))
    }
}

/// Component `k` of the drift `μ ↦ b(t, x, μ)_k` of a coefficient model,
/// with the model's flat derivative when it supplies one.
pub struct DriftFunctional {
    model: Arc<dyn CoefficientModel>,
    t: f64,
    x: Vec<f64>,
    k: usize,
}

impl DriftFunctional {
    pub fn new(model: Arc<dyn CoefficientModel>, t: f64, x: Vec<f64>, k: usize) -> Result<Self> {
        if x.len() != model.dim_x() || k >= model.dim_x() {
            return Err(Error::Usage("drift functional point or component out of range".into()));
        }
        Ok(Self { model, t, x, k })
    }
}

impl MeasureFunctional for DriftFunctional {
    fn name(&self) -> &str {
        self.model.name()
    }

    fn eval(&self, mu: &Measure) -> Result<f64> {
        Ok(self.model.drift(self.t, &self.x, mu)?[self.k])
    }

    fn flat_derivative(&self, mu: &Measure, y: &[f64]) -> Result<Option<f64>> {
        Ok(self.model.flat_drift(self.t, &self.x, mu, y)?.map(|v| v[self.k]))
    }
}

/// Functionals available by name in scenario files.
pub const FUNCTIONAL_NAMES: [&str; 5] = ["sin_integral", "second_moment", "mean_squared", "constant", "scalar_interaction"];

/// The named functional. `scalar_interaction` is the drift at `x = 0.3` of
/// the registry `scalar` model with `b = 0.5 - x + 1.5 ∫ sin dμ`.
pub fn functional_by_name(name: &str) -> Result<Arc<dyn MeasureFunctional>> {
    Ok(match name {
        "sin_integral" => Arc::new(sin_integral()),
        "second_moment" => Arc::new(second_moment()),
        "mean_squared" => Arc::new(mean_squared()),
        "constant" => Arc::new(Constant(1.0)),
        "scalar_interaction" => {
            let params = serde_json::json!({
                "moment": "sin", "drift_const": 0.5, "drift_self": -1.0, "drift_interaction": 1.5
            });
            let model = build_model("scalar", params.as_object().expect("object literal"))?;
            Arc::new(DriftFunctional::new(model, 0.0, vec![0.3], 0)?)
        }
        other => {
            return Err(Error::Usage(format!(
                "unknown functional `{other}` (valid: {})",
                FUNCTIONAL_NAMES.join(", ")
            )))
        }
    })
}
