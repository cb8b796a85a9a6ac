//! Parametrix expansion of the transition density of the decoupled flow.
//!
//! The frozen Gaussian proxy `p̂`, the correction kernel `ℋ`, the space-time
//! convolution `⊗` and the truncated series `Σ_{k≤K} p̂ ⊗ ℋ^{(k)}`.

mod convolve;
mod series;
mod verify;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientModel;
use crate::error::{Error, Result};
use crate::kernels::{gauss_eval, hermite1, hermite2, CovMatrix};
use crate::measures::{io, DensityGrid, GridSpec, Measure, MeasureFlow, TimeGrid};
use crate::quadrature::LegendreRule;

pub use convolve::{spacetime_convolve, ConvolveConfig};
pub use series::{density_of_law, density_series, law_series};
pub use verify::{
    verify_derivative_scaling, verify_gaussian_bound, BoundRow, BoundSettings, GaussianBoundReport, ScalingReport,
};

/// Largest truncation order accepted by [`ParametrixConfig::validate`].
pub const MAX_ORDER: usize = 6;

/// The model together with the frozen law flow `t ↦ [X^{s,ξ}_t]` and the
/// start time `s` of the dynamics.
#[derive(Clone)]
pub struct ProxySpec {
    model: Arc<dyn CoefficientModel>,
    flow: Arc<MeasureFlow>,
    s: f64,
}

impl ProxySpec {
    pub fn new(model: Arc<dyn CoefficientModel>, flow: Arc<MeasureFlow>, s: f64) -> Result<Self> {
        if flow.dim() != model.dim_x() {
            return Err(Error::Usage(format!(
                "flow dimension {} does not match model dimension {}",
                flow.dim(),
                model.dim_x()
            )));
        }
        if !flow.covers(s, s) {
            return Err(Error::Usage(format!("flow does not cover the start time {s}")));
        }
        Ok(Self { model, flow, s })
    }

    /// Spec with the law frozen at `law` on `[s, horizon]`, for measure-free
    /// models or a fixed environment.
    pub fn with_fixed_law(model: Arc<dyn CoefficientModel>, law: Measure, s: f64, horizon: f64) -> Result<Self> {
        let times = TimeGrid::new(vec![s, horizon])?;
        Self::new(model, Arc::new(MeasureFlow::constant(law, times)), s)
    }

    pub fn model(&self) -> &dyn CoefficientModel {
        self.model.as_ref()
    }

    pub fn model_arc(&self) -> Arc<dyn CoefficientModel> {
        self.model.clone()
    }

    pub fn flow(&self) -> &MeasureFlow {
        &self.flow
    }

    pub fn start(&self) -> f64 {
        self.s
    }

    pub fn horizon(&self) -> f64 {
        self.flow.times().end()
    }

    fn check_interval(&self, t1: f64, t2: f64) -> Result<()> {
        if !(self.s <= t1 && t1 < t2) {
            return Err(Error::Usage(format!(
                "need s <= t1 < t2, got s = {}, t1 = {t1}, t2 = {t2}",
                self.s
            )));
        }
        if !self.flow.covers(t1, t2) {
            return Err(Error::Usage(format!("flow does not cover [{t1}, {t2}]")));
        }
        Ok(())
    }

    /// `∫_{t1}^{t2} a(r, y, flow(r)) dr`, row-major, by Gauss-Legendre on each
    /// piece between flow nodes.
    pub fn integrated_diffusion(&self, t1: f64, t2: f64, y: &[f64]) -> Result<Vec<f64>> {
        self.check_interval(t1, t2)?;
        let d = self.model.dim_x();
        if y.len() != d {
            return Err(Error::Usage("point dimension does not match the model".into()));
        }
        let rule = LegendreRule::new(8)?;
        let mut cuts = vec![t1];
        cuts.extend(self.flow.times().as_slice().iter().copied().filter(|&r| r > t1 && r < t2));
        cuts.push(t2);
        let mut acc = vec![0.0; d * d];
        for piece in cuts.windows(2) {
            for (r, w) in rule.on(piece[0], piece[1]) {
                let law = self.flow.law_at(r)?;
                let a = self.model.diffusion(r, y, &law)?;
                for i in 0..d {
                    for j in 0..d {
                        acc[i * d + j] += w * a[(i, j)];
                    }
                }
            }
        }
        Ok(acc)
    }

    fn covariance(&self, t1: f64, t2: f64, y: &[f64]) -> Result<CovMatrix<f64>> {
        let d = self.model.dim_x();
        CovMatrix::new(d, self.integrated_diffusion(t1, t2, y)?).map_err(|e| match e {
            Error::Domain(m) => Error::Domain(format!("accumulated covariance on [{t1}, {t2}] is not positive definite: {m}")),
            other => other,
        })
    }
}

/// Frozen Gaussian proxy `p̂^y(t1, t2, x, z) = g(∫_{t1}^{t2} a(r, y, flow(r)) dr, z - x)`.
pub fn proxy_density(spec: &ProxySpec, t1: f64, t2: f64, x: &[f64], freeze_y: &[f64], z: &[f64]) -> Result<f64> {
    let sigma = spec.covariance(t1, t2, freeze_y)?;
    let diff: Vec<f64> = z.iter().zip(x).map(|(z, x)| z - x).collect();
    Ok(gauss_eval(&sigma, &diff)?.value())
}

/// Parametrix kernel `ℋ(r, t, x, y) = (L_r - L̂_r^y) p̂^y(r, t, ·, y)(x)`:
///
/// `[Σ_i b_i(r, x) H₁ⁱ(Σ, x - y) + ½ Σ_{ij} (a_ij(r, x) - a_ij(r, y)) H₂^{ij}(Σ, y - x)] g(Σ, y - x)`
///
/// with `Σ = ∫_r^t a(v, y, flow(v)) dv`. `H₁` is odd, so `H₁(Σ, x - y)` is
/// the factor produced by differentiating `g(Σ, y - x)` in `x`.
pub fn parametrix_kernel(spec: &ProxySpec, r: f64, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    let d = spec.model.dim_x();
    if x.len() != d {
        return Err(Error::Usage("point dimension does not match the model".into()));
    }
    let sigma = spec.covariance(r, t, y)?;
    let law = spec.flow.law_at(r)?;
    let frozen = spec.model.freeze(r, &law)?;
    let mut b = vec![0.0; d];
    frozen.drift_into(x, &mut b);
    let mut ax = vec![0.0; d * d];
    let mut ay = vec![0.0; d * d];
    frozen.diffusion_into(x, &mut ax);
    frozen.diffusion_into(y, &mut ay);
    let yx: Vec<f64> = y.iter().zip(x).map(|(y, x)| y - x).collect();
    let xy: Vec<f64> = yx.iter().map(|v| -v).collect();
    let g = gauss_eval(&sigma, &yx)?.value();
    let h1 = hermite1(&sigma, &xy)?;
    let h2 = hermite2(&sigma, &yx)?;
    let mut bracket = 0.0;
    for i in 0..d {
        bracket += b[i] * h1[i];
        for j in 0..d {
            bracket += 0.5 * (ax[i * d + j] - ay[i * d + j]) * h2[i * d + j];
        }
    }
    Ok(bracket * g)
}

/// Truncation and discretization settings of the series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParametrixConfig {
    /// Truncation order `K`.
    pub order: usize,
    /// Gauss-Legendre nodes per time convolution.
    pub time_nodes: usize,
    /// Explicit `z` grid; when absent a window around the start point is
    /// sized from the diffusion and the outward drift.
    pub space_grid: Option<GridSpec<f64>>,
    /// Cell count of the automatic grid.
    pub cells: usize,
    /// Half-width of the automatic grid in standard deviations.
    pub width_factor: f64,
    /// Time intervals on which the coefficients are tabulated.
    pub coefficient_steps: usize,
    /// Constant `c` of the reference Gaussian `g(c(t - s), ·)`.
    pub gauss_c: f64,
    /// Clip negative values and rescale to unit mass.
    pub renormalize: bool,
    /// Initial laws with more atoms are binned to this many nodes.
    pub law_nodes: usize,
    /// Memory budget for tabulated coefficients and cached terms.
    pub memory_budget_mb: usize,
}

impl Default for ParametrixConfig {
    fn default() -> Self {
        Self {
            order: 3,
            time_nodes: 8,
            space_grid: None,
            cells: 1024,
            width_factor: 8.0,
            coefficient_steps: 64,
            gauss_c: 2.0,
            renormalize: true,
            law_nodes: 128,
            memory_budget_mb: 512,
        }
    }
}

impl ParametrixConfig {
    pub fn validate(&self) -> Result<()> {
        if self.order > MAX_ORDER {
            return Err(Error::Usage(format!("truncation order {} exceeds {MAX_ORDER}", self.order)));
        }
        if self.time_nodes < 8 {
            return Err(Error::Usage(format!("time_nodes must be at least 8, got {}", self.time_nodes)));
        }
        if self.cells < 16 {
            return Err(Error::Usage("the space grid needs at least 16 cells".into()));
        }
        if !(self.width_factor > 0.0) || !(self.gauss_c > 0.0) {
            return Err(Error::Usage("width_factor and gauss_c must be positive".into()));
        }
        if self.coefficient_steps == 0 || self.law_nodes == 0 {
            return Err(Error::Usage("coefficient_steps and law_nodes must be positive".into()));
        }
        if let Some(g) = &self.space_grid {
            if g.dim() != 1 {
                return Err(Error::Usage("the parametrix space grid must be one-dimensional".into()));
            }
        }
        Ok(())
    }

    /// Same settings with renormalization switched off.
    pub fn raw(&self) -> Self {
        Self { renormalize: false, ..self.clone() }
    }
}

/// Where a density came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model: String,
    pub order: usize,
    pub time_nodes: usize,
    pub cells: usize,
    pub coefficient_steps: usize,
    pub flow_fingerprint: String,
}

/// `p_K(μ, s, t, x, ·)` on a grid, with the signed series, its terms and mass
/// diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct TransitionDensity {
    pub s: f64,
    pub t: f64,
    /// Start point; `None` for densities of a law.
    pub x: Option<Vec<f64>>,
    /// Clipped at zero, and rescaled to unit mass when renormalized.
    #[serde(skip)]
    pub values: DensityGrid<f64>,
    /// Signed truncated series.
    #[serde(skip)]
    pub raw: Vec<f64>,
    /// `p̂ ⊗ ℋ^{(k)}` for `k = 0..=K`.
    #[serde(skip)]
    pub terms: Vec<Vec<f64>>,
    pub raw_mass: f64,
    pub clipped_mass: f64,
    pub renormalized: bool,
    /// Largest diffusion value seen on the grid over `[s, t]`.
    pub diffusion_max: f64,
    pub provenance: Provenance,
}

impl TransitionDensity {
    pub fn axis(&self) -> Vec<f64> {
        self.values.spec().axis(0)
    }

    pub fn spacing(&self) -> f64 {
        self.values.spacing()[0]
    }

    /// Trapezoid integral of a signed vector on this grid.
    pub fn integrate_raw(&self, v: &[f64]) -> f64 {
        trapezoid(v, self.spacing())
    }

    /// Writes the grid as CSV with its JSON header, plus a `.provenance.json`
    /// sidecar with the mass diagnostics.
    pub fn write(&self, path: &Path) -> Result<()> {
        io::write_grid(path, &self.values)?;
        let side = path.with_extension("provenance.json");
        std::fs::write(side, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

pub(crate) fn trapezoid(v: &[f64], h: f64) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => 0.0,
        n => h * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[n - 1])),
    }
}
