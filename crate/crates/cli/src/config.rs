//! Scenario configuration. Human-authored files are TOML; see
//! `docs/config-schema.md` for the full schema.

use std::fs;
use std::path::{Path, PathBuf};

use mvflow::coefficients::{build_model, CoefficientModel, MODEL_NAMES};
use mvflow::error::{Error, Result};
use mvflow::lions::FUNCTIONAL_NAMES;
use mvflow::measures::{DensityGrid, EmpiricalMeasure, GridSpec, Measure};
use mvflow::parametrix::ParametrixConfig;
use mvflow::pde::{FdConfig, Method};
use mvflow::picard::Backend;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Density,
    Picard,
    Simulate,
    Pde,
    Verify,
    Lions,
}

impl ScenarioKind {
    pub const NAMES: [&'static str; 6] = ["density", "picard", "simulate", "pde", "verify", "lions"];

    pub fn name(self) -> &'static str {
        Self::NAMES[self as usize]
    }

    pub fn parse(s: &str) -> Result<Self> {
        match Self::NAMES.iter().position(|n| *n == s) {
            Some(i) => Ok([Self::Density, Self::Picard, Self::Simulate, Self::Pde, Self::Verify, Self::Lions][i]),
            None => Err(Error::Usage(format!("unknown scenario `{s}` (valid: {})", Self::NAMES.join(", ")))),
        }
    }
}

/// Registry model name and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub params: Map<String, Value>,
}

impl ModelSpec {
    pub fn build(&self) -> Result<Arc<dyn CoefficientModel>> {
        build_model(&self.name, &self.params)
    }
}

/// A measure written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    Dirac {
        point: Vec<f64>,
    },
    /// Equally weighted one-dimensional atoms, or weighted when `weights` is set.
    Points {
        points: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    /// One-dimensional normal density on a grid of `±8 sd`.
    Gaussian {
        mean: f64,
        sd: f64,
        #[serde(default = "default_gaussian_cells")]
        cells: usize,
    },
}

fn default_gaussian_cells() -> usize {
    400
}

impl Default for MeasureSpec {
    fn default() -> Self {
        MeasureSpec::Dirac { point: vec![0.0] }
    }
}

impl MeasureSpec {
    pub fn build(&self) -> Result<Measure> {
        match self {
            MeasureSpec::Dirac { point } => Measure::dirac(point),
            MeasureSpec::Points { points, weights: None } => Ok(Measure::Empirical(EmpiricalMeasure::uniform(1, points.clone())?)),
            MeasureSpec::Points { points, weights: Some(w) } => {
                Ok(Measure::Empirical(EmpiricalMeasure::new(1, points.clone(), w.clone())?))
            }
            MeasureSpec::Gaussian { mean, sd, cells } => {
                if !(*sd > 0.0) {
                    return Err(Error::Usage("gaussian measure needs sd > 0".into()));
                }
                let spec = GridSpec::centered(*mean, 8.0 * sd, *cells)?;
                let c = 1.0 / (sd * std::f64::consts::TAU.sqrt());
                let g = DensityGrid::from_fn(&spec, |z| c * (-0.5 * ((z[0] - mean) / sd).powi(2)).exp())?;
                Ok(Measure::Grid(g.normalized()?))
            }
        }
    }

    pub fn build_empirical(&self) -> Result<EmpiricalMeasure<f64>> {
        match self.build()? {
            Measure::Empirical(m) => Ok(m),
            Measure::Grid(_) => Err(Error::Usage("this field needs a dirac or points measure".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySection {
    #[serde(default)]
    pub s: f64,
    pub t: f64,
    #[serde(default = "origin")]
    pub x: Vec<f64>,
    /// Initial law of the flow; the Dirac mass at `x` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<MeasureSpec>,
    #[serde(default = "default_flow_steps")]
    pub flow_steps: usize,
}

fn origin() -> Vec<f64> {
    vec![0.0]
}

fn default_flow_steps() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardSection {
    pub horizon: f64,
    #[serde(default)]
    pub initial: MeasureSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<MeasureSpec>,
    #[serde(default = "default_flow_steps")]
    pub time_steps: usize,
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deposit_bandwidth: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub backend: Backend,
    /// Fail verification unless every successive-iterate ratio is below one.
    #[serde(default = "yes")]
    pub expect_contraction: bool,
}

fn default_cells() -> usize {
    400
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iters() -> usize {
    60
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulateMode {
    Paths,
    Chaos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(default = "default_mode")]
    pub mode: SimulateMode,
    #[serde(default)]
    pub initial: MeasureSpec,
    #[serde(default = "default_particles")]
    pub particles: usize,
    pub dt: f64,
    pub horizon: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "one")]
    pub noise_refinement: usize,
    /// Particle counts of a chaos run, strictly increasing.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub counts: Vec<usize>,
    /// Size of the reference run of a chaos study.
    #[serde(default = "default_reference")]
    pub reference_particles: usize,
}

fn default_mode() -> SimulateMode {
    SimulateMode::Paths
}

fn default_particles() -> usize {
    10_000
}

fn default_record_every() -> usize {
    10
}

fn one() -> usize {
    1
}

fn default_reference() -> usize {
    100_000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalKind {
    Zero,
    Identity,
    Square,
    SecondMoment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSection {
    pub horizon: f64,
    pub terminal: TerminalKind,
    /// Constant source `f`.
    #[serde(default)]
    pub source: f64,
    #[serde(default)]
    pub method: Method,
    /// The law `μ` of every evaluation point.
    #[serde(default)]
    pub mu: MeasureSpec,
    /// `(t, x)` evaluation points.
    pub points: Vec<[f64; 2]>,
    #[serde(default = "default_flow_steps")]
    pub flow_steps: usize,
    #[serde(default)]
    pub residual: bool,
    /// Fail verification when the largest residual exceeds this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_tol: Option<f64>,
    #[serde(default)]
    pub fd: FdConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyCheck {
    GaussianBound,
    DerivativeScaling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub checks: Vec<VerifyCheck>,
    #[serde(default = "default_verify_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub x: f64,
    /// Frozen law of the coefficients.
    #[serde(default)]
    pub law: MeasureSpec,
    #[serde(default = "default_bound_taus")]
    pub bound_taus: Vec<f64>,
    #[serde(default = "default_c_grid")]
    pub c_grid: Vec<f64>,
    /// `|b|_∞` used for the bound constant.
    #[serde(default = "one_f")]
    pub drift_sup: f64,
    #[serde(default = "one_f")]
    pub eta: f64,
    #[serde(default = "default_scaling_taus")]
    pub scaling_taus: Vec<f64>,
    #[serde(default = "default_orders")]
    pub orders: Vec<u32>,
}

fn default_verify_horizon() -> f64 {
    0.5
}

fn default_bound_taus() -> Vec<f64> {
    vec![0.05, 0.125, 0.25, 0.5]
}

fn default_c_grid() -> Vec<f64> {
    vec![1.5, 2.0, 3.0]
}

fn one_f() -> f64 {
    1.0
}

fn default_scaling_taus() -> Vec<f64> {
    vec![0.005, 0.05, 0.5]
}

fn default_orders() -> Vec<u32> {
    vec![1, 2]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LionsSection {
    pub functional: String,
    pub points: Vec<f64>,
    pub ys: Vec<f64>,
    #[serde(default = "default_lions_tol")]
    pub tol: f64,
}

fn default_lions_tol() -> f64 {
    1e-4
}

/// A complete scenario: which module to run, on which model, with which
/// numerical settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub parametrix: ParametrixConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensitySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub picard: Option<PicardSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pde: Option<PdeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lions: Option<LionsSection>,
}

fn missing(field: &str, why: &str) -> Error {
    Error::Usage(format!("missing field `{field}`: {why}"))
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Usage(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Usage(format!("cannot serialize config: {e}")))
    }

    /// Whether the scenario draws random numbers and hence needs a seed.
    pub fn is_stochastic(&self) -> bool {
        match self.scenario {
            ScenarioKind::Simulate => true,
            ScenarioKind::Picard => matches!(self.picard.as_ref().map(|p| &p.backend), Some(Backend::Particle { .. })),
            ScenarioKind::Pde => matches!(self.pde.as_ref().map(|p| &p.method), Some(Method::MonteCarlo { .. })),
            _ => false,
        }
    }

    /// Checks section presence, registry names and the seed requirement.
    pub fn validate(&self) -> Result<()> {
        let kind = self.scenario.name();
        let section_present = match self.scenario {
            ScenarioKind::Density => self.density.is_some(),
            ScenarioKind::Picard => self.picard.is_some(),
            ScenarioKind::Simulate => self.simulate.is_some(),
            ScenarioKind::Pde => self.pde.is_some(),
            ScenarioKind::Verify => self.verify.is_some(),
            ScenarioKind::Lions => self.lions.is_some(),
        };
        if !section_present {
            return Err(missing(kind, &format!("scenario `{kind}` needs a [{kind}] section")));
        }
        if self.scenario == ScenarioKind::Lions {
            let name = &self.lions.as_ref().expect("checked").functional;
            if !FUNCTIONAL_NAMES.contains(&name.as_str()) {
                return Err(Error::Usage(format!(
                    "unknown functional `{name}` (valid: {})",
                    FUNCTIONAL_NAMES.join(", ")
                )));
            }
        } else {
            let model = self.model.as_ref().ok_or_else(|| missing("model", &format!("scenario `{kind}` needs a [model] section")))?;
            if !MODEL_NAMES.contains(&model.name.as_str()) {
                return Err(Error::Usage(format!(
                    "unknown model `{}` (valid: {})",
                    model.name,
                    MODEL_NAMES.join(", ")
                )));
            }
            model.build()?;
        }
        if self.is_stochastic() && self.seed.is_none() {
            return Err(missing("seed", &format!("scenario `{kind}` is stochastic and needs an explicit seed")));
        }
        if let Some(sim) = &self.simulate {
            if sim.mode == SimulateMode::Chaos && sim.counts.is_empty() {
                return Err(missing("simulate.counts", "chaos runs need particle counts"));
            }
        }
        self.parametrix.validate()
    }
}
