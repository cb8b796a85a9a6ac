//! The linear Cauchy problem on `[0, T] × ℝᵈ × 𝒫₂(ℝᵈ)`: generator,
//! Feynman-Kac solution, residual and growth checks.

mod checks;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientModel;
use crate::error::{Error, Result};
use crate::measures::{EmpiricalMeasure, Measure, MeasureFlow};
use crate::parametrix::{density_series, trapezoid, ParametrixConfig, ProxySpec, TransitionDensity};
use crate::picard::{picard_solve, PicardConfig};
use crate::quadrature::LegendreRule;
use crate::simulate::{euler_decoupled, SimConfig};

pub use checks::{
    chain_rule_check, growth_bound_check, residual_check, ChainRuleConfig, ChainRuleReport, FdConfig, GrowthReport,
    GrowthSample, ResidualPoint, ResidualReport,
};

pub type SourceFn = Arc<dyn Fn(f64, &[f64], &Measure) -> f64 + Send + Sync>;
pub type TerminalFn = Arc<dyn Fn(&[f64], &Measure) -> f64 + Send + Sync>;

/// Declared growth `|f|, |h| ≤ C exp(α|x|²/T) (1 + M₂(μ)^q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Growth {
    pub c: f64,
    pub alpha: f64,
    pub q: f64,
}

impl Default for Growth {
    fn default() -> Self {
        Self { c: 1.0, alpha: 0.0, q: 0.0 }
    }
}

impl Growth {
    pub fn bound(&self, x: &[f64], mu: &Measure, horizon: f64) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        self.c * (self.alpha * r2 / horizon).exp() * (1.0 + mu.moment2().powf(self.q))
    }
}

/// Source `f(t, x, μ)` (zero when absent), terminal `h(x, μ)` and horizon `T`.
#[derive(Clone)]
pub struct CauchyData {
    pub name: String,
    pub horizon: f64,
    pub source: Option<SourceFn>,
    pub terminal: TerminalFn,
    pub growth: Growth,
}

impl CauchyData {
    pub fn new(name: &str, horizon: f64, source: Option<SourceFn>, terminal: TerminalFn) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::Usage("the horizon T must be positive".into()));
        }
        Ok(Self {
            name: name.into(),
            horizon,
            source,
            terminal,
            growth: Growth::default(),
        })
    }

    pub fn with_growth(mut self, growth: Growth) -> Self {
        self.growth = growth;
        self
    }

    /// `(f₁ + f₂, h₁ + h₂)`.
    pub fn sum(&self, other: &CauchyData) -> Result<CauchyData> {
        if self.horizon != other.horizon {
            return Err(Error::Usage("cannot add Cauchy data with different horizons".into()));
        }
        let source: Option<SourceFn> = match (&self.source, &other.source) {
            (None, None) => None,
            (Some(f), None) | (None, Some(f)) => Some(f.clone()),
            (Some(f), Some(g)) => {
                let (f, g) = (f.clone(), g.clone());
                Some(Arc::new(move |t, x, m| f(t, x, m) + g(t, x, m)))
            }
        };
        let (h1, h2) = (self.terminal.clone(), other.terminal.clone());
        Ok(CauchyData {
            name: format!("{}+{}", self.name, other.name),
            horizon: self.horizon,
            source,
            terminal: Arc::new(move |x, m| h1(x, m) + h2(x, m)),
            growth: Growth {
                c: self.growth.c + other.growth.c,
                alpha: self.growth.alpha.max(other.growth.alpha),
                q: self.growth.q.max(other.growth.q),
            },
        })
    }

    /// True when `|f|` and `|h|` respect the declared growth at every sample.
    pub fn satisfies_growth(&self, samples: &[(f64, Vec<f64>, Measure)]) -> bool {
        samples.iter().all(|(t, x, mu)| {
            let b = self.growth.bound(x, mu, self.horizon);
            let f = self.source.as_ref().map_or(0.0, |f| f(*t, x, mu));
            let h = (self.terminal)(x, mu);
            f.is_finite() && h.is_finite() && f.abs() <= b && h.abs() <= b
        })
    }
}

/// `h(x, μ) = x₁`.
pub fn terminal_identity() -> TerminalFn {
    Arc::new(|x, _| x[0])
}

/// `h(x, μ) = |x|²`.
pub fn terminal_square() -> TerminalFn {
    Arc::new(|x, _| x.iter().map(|v| v * v).sum())
}

/// `h(x, μ) = M₂(μ)`.
pub fn terminal_second_moment() -> TerminalFn {
    Arc::new(|_, m| m.moment2())
}

/// `f(t, x, μ) = c`.
pub fn source_constant(c: f64) -> SourceFn {
    Arc::new(move |_, _, _| c)
}

type ScalarCb = Arc<dyn Fn(f64, &[f64], &Measure) -> f64 + Send + Sync>;
type VecCb = Arc<dyn Fn(f64, &[f64], &Measure) -> Vec<f64> + Send + Sync>;
type MuCb = Arc<dyn Fn(f64, &[f64], &Measure, &[f64]) -> Vec<f64> + Send + Sync>;

/// A function `g(t, x, μ)` described by its derivative callbacks. Matrices
/// are row-major `d × d`; `dv_dmu[i·d + j] = ∂_{v_i} [∂_μ g(t, x, μ)(v)]_j`.
#[derive(Clone, Default)]
pub struct TestFunction {
    pub value: Option<ScalarCb>,
    pub dt: Option<ScalarCb>,
    pub dx: Option<VecCb>,
    pub dxx: Option<VecCb>,
    pub dmu: Option<MuCb>,
    pub dv_dmu: Option<MuCb>,
}

fn need<'a, T: ?Sized>(cb: &'a Option<Arc<T>>, what: &str) -> Result<&'a T> {
    cb.as_deref().ok_or_else(|| Error::Usage(format!("test function has no `{what}` callback")))
}

/// `ℒ_t g(x, μ) = b·∂_x g + ½ a:∂²_x g + ∫ [b(t, z, μ)·∂_μ g(z) + ½ a(t, z, μ):∂_z ∂_μ g(z)] μ(dz)`.
pub fn generator_apply(model: &dyn CoefficientModel, g: &TestFunction, t: f64, x: &[f64], mu: &Measure) -> Result<f64> {
    let (dx, dxx, dmu, dv_dmu) = (need(&g.dx, "dx")?, need(&g.dxx, "dxx")?, need(&g.dmu, "dmu")?, need(&g.dv_dmu, "dv_dmu")?);
    let d = model.dim_x();
    if x.len() != d || mu.dim() != d {
        return Err(Error::Usage("point or measure dimension does not match the model".into()));
    }
    let fr = model.freeze(t, mu)?;
    let local = |y: &[f64], grad: &[f64], hess: &[f64]| -> f64 {
        let (b, a) = (fr.drift(y), fr.diffusion(y));
        let mut acc = 0.0;
        for i in 0..d {
            acc += b[i] * grad[i];
            for j in 0..d {
                acc += 0.5 * a[(i, j)] * hess[i * d + j];
            }
        }
        acc
    };
    let spatial = local(x, &dx(t, x, mu), &dxx(t, x, mu));
    let measure = mu.integrate(|z| local(z, &dmu(t, x, mu, z), &dv_dmu(t, x, mu, z)));
    Ok(spatial + measure)
}

/// How `U` is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Method {
    /// `∫ h p dz - ∫∫ f p dz ds` with the parametrix density; the time
    /// integral uses `source_nodes` Gauss-Legendre nodes.
    ParametrixQuadrature {
        #[serde(default)]
        parametrix: ParametrixConfig,
        #[serde(default = "default_source_nodes")]
        source_nodes: usize,
    },
    /// Average of `h(X_T) - Σ f(t_k, X_k) Δt` over decoupled Euler paths.
    MonteCarlo { sim: SimConfig },
}

fn default_source_nodes() -> usize {
    4
}

impl Default for Method {
    fn default() -> Self {
        Method::ParametrixQuadrature {
            parametrix: ParametrixConfig::default(),
            source_nodes: default_source_nodes(),
        }
    }
}

/// A value of `U` with its error estimate: the size of the last series
/// term for quadrature, the standard error for Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UEstimate {
    pub value: f64,
    pub error: f64,
}

fn pair(td: &TransitionDensity, g: impl Fn(f64) -> f64) -> (f64, f64) {
    let z = td.axis();
    let h = td.spacing();
    let gz: Vec<f64> = z.iter().map(|z| g(*z)).collect();
    let main: Vec<f64> = gz.iter().zip(td.values.values()).map(|(a, b)| a * b).collect();
    let last = td.terms.last().map_or(0.0, |term| {
        let v: Vec<f64> = gz.iter().zip(term).map(|(a, b)| a * b).collect();
        if td.terms.len() > 1 {
            trapezoid(&v, h).abs()
        } else {
            0.0
        }
    });
    (trapezoid(&main, h), last)
}

/// `U(t, x, μ) = E[h(X_T, [X_T]) - ∫_t^T f(s, X_s, [X_s]) ds]` for the
/// decoupled flow frozen at `flow`, which must be the law flow started
/// from `(t, μ)`.
///
/// `c_fit` is a fitted Gaussian-bound constant; when given, terminal data
/// with `α ≥ 1 / (4 c_fit)` is refused.
pub fn solve_u(
    model: Arc<dyn CoefficientModel>,
    data: &CauchyData,
    flow: Arc<MeasureFlow>,
    t: f64,
    x: &[f64],
    method: &Method,
    c_fit: Option<f64>,
) -> Result<UEstimate> {
    let horizon = data.horizon;
    if let Some(c) = c_fit {
        if data.growth.alpha >= 1.0 / (4.0 * c) {
            return Err(Error::Domain(format!(
                "growth exponent α = {} is not below 1/(4c) = {} for the fitted c = {c}",
                data.growth.alpha,
                1.0 / (4.0 * c)
            )));
        }
    }
    if !(t <= horizon) {
        return Err(Error::Usage(format!("need t <= T, got t = {t}, T = {horizon}")));
    }
    if !flow.covers(t, horizon) {
        return Err(Error::Usage(format!("flow does not cover [{t}, {horizon}]")));
    }
    let terminal_law = flow.law_at(horizon)?.into_owned();
    if t == horizon {
        return Ok(UEstimate {
            value: (data.terminal)(x, &terminal_law),
            error: 0.0,
        });
    }
    match method {
        Method::ParametrixQuadrature { parametrix, source_nodes } => {
            let spec = ProxySpec::new(model, flow.clone(), t)?;
            let td = density_series(&spec, horizon, x, parametrix)?;
            let (mut value, mut error) = pair(&td, |z| (data.terminal)(&[z], &terminal_law));
            if let Some(f) = &data.source {
                for (s, w) in LegendreRule::new(*source_nodes)?.on(t, horizon) {
                    let law = flow.law_at(s)?;
                    let td = density_series(&spec, s, x, parametrix)?;
                    let (v, e) = pair(&td, |z| f(s, &[z], &law));
                    value -= w * v;
                    error += w * e;
                }
            }
            Ok(UEstimate { value, error })
        }
        Method::MonteCarlo { sim } => {
            let cfg = SimConfig {
                horizon,
                record_every: if data.source.is_some() { 1 } else { usize::MAX },
                ..sim.clone()
            };
            let run = euler_decoupled(model.as_ref(), &flow, t, x, &cfg)?;
            let d = run.dim();
            let last = run.times().len() - 1;
            let mut samples = vec![0.0; run.particles()];
            for (i, s) in samples.iter_mut().enumerate() {
                *s = (data.terminal)(&run.frame(last)[i * d..(i + 1) * d], &terminal_law);
            }
            if let Some(f) = &data.source {
                for k in 0..last {
                    let (tk, dt) = (run.times()[k], run.times()[k + 1] - run.times()[k]);
                    let law = flow.law_at(tk)?;
                    let frame = run.frame(k);
                    for (i, s) in samples.iter_mut().enumerate() {
                        *s -= dt * f(tk, &frame[i * d..(i + 1) * d], &law);
                    }
                }
            }
            let n = samples.len() as f64;
            let mean = samples.iter().sum::<f64>() / n;
            let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            Ok(UEstimate {
                value: mean,
                error: (var / n).sqrt(),
            })
        }
    }
}

/// `(t, x, μ) ↦ U(t, x, μ)`, re-solving the law flow from `(t, μ)` with
/// the Picard solver for every call.
#[derive(Clone)]
pub struct SolutionEvaluator {
    pub model: Arc<dyn CoefficientModel>,
    pub data: CauchyData,
    /// Solver settings; start, horizon and initial law are set per call.
    pub picard: PicardConfig,
    pub method: Method,
    pub c_fit: Option<f64>,
}

impl SolutionEvaluator {
    pub fn new(model: Arc<dyn CoefficientModel>, data: CauchyData, method: Method) -> Self {
        let picard = PicardConfig::new(Measure::dirac(&vec![0.0; model.dim_x()]).expect("finite point"), data.horizon);
        Self {
            model,
            data,
            picard,
            method,
            c_fit: None,
        }
    }

    pub fn flow(&self, t: f64, mu: &Measure) -> Result<Arc<MeasureFlow>> {
        let cfg = PicardConfig {
            start: t,
            horizon: self.data.horizon - t,
            initial: mu.clone(),
            nu: None,
            ..self.picard.clone()
        };
        Ok(Arc::new(picard_solve(self.model.as_ref(), &cfg)?.flow))
    }

    pub fn value(&self, t: f64, x: &[f64], mu: &Measure) -> Result<UEstimate> {
        if t >= self.data.horizon {
            return Ok(UEstimate {
                value: (self.data.terminal)(x, mu),
                error: 0.0,
            });
        }
        let flow = self.flow(t, mu)?;
        solve_u(self.model.clone(), &self.data, flow, t, x, &self.method, self.c_fit)
    }

    pub fn value_empirical(&self, t: f64, x: &[f64], mu: &EmpiricalMeasure<f64>) -> Result<f64> {
        Ok(self.value(t, x, &Measure::Empirical(mu.clone()))?.value)
    }
}
