//! Named, parameterized model families for declarative configuration.
//!
//! All registry models are one-dimensional. Parameters are read from a JSON
//! object; unknown keys are rejected.
//!
//! | name          | drift                                              | volatility                    |
//! |---------------|----------------------------------------------------|-------------------------------|
//! | `first_order` | `∫ (c + α x + β y) μ(dy)`                          | `σ + γ ∫ sin(y) μ(dy)`        |
//! | `n_order`     | `α x + β ∫..∫ y_1..y_N μ^{⊗N}`                     | `σ`                           |
//! | `scalar`      | `c + α x + β ∫ψ dμ`, `ψ ∈ {mean, second_moment, sin}` | `σ (1 + γ z²/(2+z²))`, `z = ∫ sin dμ` |
//! | `polynomial`  | `(α x + β m) m^{N-1}`, `m = ∫ y μ(dy)`             | `σ`                           |
//!
//! Parameter keys: `drift_const` (c), `drift_self` (α), `drift_interaction` (β),
//! `sigma` (σ), `sigma_interaction` / `vol_interaction` (γ), `order` (N), `moment` (ψ).

use std::sync::Arc;

use serde_json::{Map, Value};

use crate::coefficients::{
    make_first_order, make_n_order, make_polynomial, make_scalar, CoefficientModel, ScalarFn, SigmaFactor, VecKernel,
};
use crate::error::{Error, Result};

/// Registered model family names.
pub const MODEL_NAMES: [&str; 4] = ["first_order", "n_order", "scalar", "polynomial"];

struct Params<'a> {
    map: &'a Map<String, Value>,
    model: &'a str,
}

impl Params<'_> {
    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for k in self.map.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::Usage(format!(
                    "model `{}` has no parameter `{k}` (valid: {})",
                    self.model,
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }

    fn num(&self, key: &str, default: f64) -> Result<f64> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v.as_f64().filter(|x| x.is_finite()).ok_or_else(|| {
                Error::Usage(format!("model `{}` parameter `{key}` must be a finite number", self.model))
            }),
        }
    }

    fn count(&self, key: &str, default: usize) -> Result<usize> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_u64()
                .filter(|n| *n >= 1)
                .map(|n| n as usize)
                .ok_or_else(|| Error::Usage(format!("model `{}` parameter `{key}` must be a positive integer", self.model))),
        }
    }

    fn text<'b>(&'b self, key: &str, default: &'b str) -> Result<&'b str> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_str()
                .ok_or_else(|| Error::Usage(format!("model `{}` parameter `{key}` must be a string", self.model))),
        }
    }
}

fn positive_sigma(model: &str, sigma: f64, spread: f64) -> Result<()> {
    if !(sigma.abs() > spread.abs()) {
        return Err(Error::Domain(format!(
            "model `{model}`: |sigma| must exceed the volatility interaction to keep the diffusion elliptic"
        )));
    }
    Ok(())
}

/// Builds a registered model from its name and parameters.
pub fn build_model(name: &str, params: &Map<String, Value>) -> Result<Arc<dyn CoefficientModel>> {
    let p = Params { map: params, model: name };
    match name {
        "first_order" => {
            p.check_keys(&["drift_const", "drift_self", "drift_interaction", "sigma", "sigma_interaction"])?;
            let (c, a, b) = (p.num("drift_const", 0.0)?, p.num("drift_self", 0.0)?, p.num("drift_interaction", 0.0)?);
            let (s, g) = (p.num("sigma", 1.0)?, p.num("sigma_interaction", 0.0)?);
            positive_sigma(name, s, g)?;
            let bbar: VecKernel = Arc::new(move |_, x, y, o| o[0] = c + a * x[0] + b * y[0]);
            let sbar: VecKernel = Arc::new(move |_, _, y, o| o[0] = s + g * y[0].sin());
            Ok(Arc::new(make_first_order(1, 1, bbar, sbar)?.measure_free(b == 0.0 && g == 0.0)))
        }
        "n_order" => {
            p.check_keys(&["order", "drift_self", "drift_interaction", "sigma"])?;
            let n = p.count("order", 2)?;
            let (a, b, s) = (p.num("drift_self", 0.0)?, p.num("drift_interaction", 0.0)?, p.num("sigma", 1.0)?);
            positive_sigma(name, s, 0.0)?;
            Ok(Arc::new(make_n_order(
                n,
                1,
                1,
                Arc::new(move |_, x, ys, o| o[0] = a * x[0] + b * ys.iter().map(|y| y[0]).product::<f64>()),
                Arc::new(move |_, _, _, o| o[0] = s),
            )?))
        }
        "scalar" => {
            p.check_keys(&["moment", "drift_const", "drift_self", "drift_interaction", "sigma", "vol_interaction"])?;
            let psi: ScalarFn = match p.text("moment", "mean")? {
                "mean" => Arc::new(|y| y[0]),
                "second_moment" => Arc::new(|y| y[0] * y[0]),
                "sin" => Arc::new(|y| y[0].sin()),
                other => {
                    return Err(Error::Usage(format!(
                        "scalar model moment `{other}` unknown (valid: mean, second_moment, sin)"
                    )))
                }
            };
            let (c, a, b) = (p.num("drift_const", 0.0)?, p.num("drift_self", 0.0)?, p.num("drift_interaction", 0.0)?);
            let (s, g) = (p.num("sigma", 1.0)?, p.num("vol_interaction", 0.0)?);
            positive_sigma(name, s, 0.0)?;
            if g < -1.0 + 1e-9 {
                return Err(Error::Domain("scalar model vol_interaction must exceed -1".into()));
            }
            let psis = if b != 0.0 { vec![psi] } else { vec![] };
            let phis: Vec<ScalarFn> = if g != 0.0 { vec![Arc::new(|y: &[f64]| y[0].sin())] } else { vec![] };
            let bouter = Arc::new(move |_: f64, x: &[f64], z: &[f64], o: &mut [f64]| {
                o[0] = c + a * x[0] + if z.is_empty() { 0.0 } else { b * z[0] }
            });
            let souter = Arc::new(move |_: f64, _: &[f64], z: &[f64], o: &mut [f64]| {
                let z2 = z.first().map(|v| v * v).unwrap_or(0.0);
                o[0] = s * (1.0 + g * z2 / (2.0 + z2));
            });
            let bgrad = Arc::new(move |_: f64, _: &[f64], _: &[f64], o: &mut [f64]| o.fill(b));
            let sgrad = Arc::new(move |_: f64, _: &[f64], z: &[f64], o: &mut [f64]| {
                if let Some(z) = z.first() {
                    o[0] = s * g * 4.0 * z / (2.0 + z * z).powi(2);
                }
            });
            Ok(Arc::new(
                make_scalar(1, 1, psis, phis, bouter, souter)?
                    .with_drift_gradient(bgrad)
                    .with_sigma_gradient(sgrad),
            ))
        }
        "polynomial" => {
            p.check_keys(&["order", "drift_self", "drift_interaction", "sigma"])?;
            let n = p.count("order", 2)?;
            let (a, b, s) = (p.num("drift_self", 0.0)?, p.num("drift_interaction", 1.0)?, p.num("sigma", 1.0)?);
            positive_sigma(name, s, 0.0)?;
            let mut factors: Vec<VecKernel> = vec![Arc::new(move |_, x, y, o| o[0] = a * x[0] + b * y[0])];
            for _ in 1..n {
                factors.push(Arc::new(|_, _, y, o| o[0] = y[0]));
            }
            let sigma = SigmaFactor {
                rows: 1,
                cols: 1,
                kernel: Arc::new(move |_, _, _, o| o[0] = s),
            };
            Ok(Arc::new(make_polynomial(1, 1, factors, vec![sigma])?))
        }
        other => Err(Error::Usage(format!(
            "unknown model `{other}` (valid: {})",
            MODEL_NAMES.join(", ")
        ))),
    }
}
