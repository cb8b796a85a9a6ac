//! Picard iteration on measure flows: the map `𝒯` sending a frozen flow to
//! the marginal flow of the linear SDE with that flow in its coefficients,
//! the distance `d_{s,T}`, and contraction diagnostics.

mod fokker_planck;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientModel;
use crate::error::{Error, Result};
use crate::measures::{kde, l1_density_distance, Bandwidth, DensityGrid, GridSpec, Measure, MeasureFlow, TimeGrid};
use crate::numeric::linear_fit;
use crate::parametrix::{density_series, ParametrixConfig, ProxySpec, TransitionDensity};
use crate::simulate::{euler_decoupled_from, SimConfig};

pub use fokker_planck::{ADVECTIVE_CFL, DIFFUSIVE_CFL};

/// How `𝒯` computes the marginals of the frozen SDE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Backend {
    /// Finite-volume Fokker-Planck solve on the space grid (dimension one).
    FokkerPlanck {
        /// Explicit step; defaults to the stability limit.
        #[serde(default)]
        step: Option<f64>,
    },
    /// Euler-Maruyama paths, each marginal estimated by a kernel density.
    Particle {
        particles: usize,
        /// Euler steps per flow interval.
        #[serde(default = "default_substeps")]
        substeps: usize,
        #[serde(default)]
        bandwidth: Option<f64>,
    },
}

fn default_substeps() -> usize {
    4
}

impl Default for Backend {
    fn default() -> Self {
        Backend::FokkerPlanck { step: None }
    }
}

#[derive(Debug, Clone)]
pub struct PicardConfig {
    pub start: f64,
    /// Length `T` of the time interval.
    pub horizon: f64,
    /// Number `M` of flow intervals.
    pub time_steps: usize,
    pub initial: Measure,
    /// Initial guess `ν` for the constant flow `Q⁰`; `μ₀` when absent.
    pub nu: Option<Measure>,
    pub backend: Backend,
    /// Space grid for the flow states; sized from `μ₀`, `ν` and the
    /// coefficients at the start when absent.
    pub grid: Option<GridSpec<f64>>,
    pub cells: usize,
    /// Gaussian deposit bandwidth for particle laws; linear deposit when absent.
    pub deposit_bandwidth: Option<f64>,
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl PicardConfig {
    pub fn new(initial: Measure, horizon: f64) -> Self {
        Self {
            start: 0.0,
            horizon,
            time_steps: 50,
            initial,
            nu: None,
            backend: Backend::default(),
            grid: None,
            cells: 400,
            deposit_bandwidth: None,
            tol: 1e-8,
            max_iters: 60,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || self.time_steps < 2 || !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(Error::Usage("need horizon > 0, time_steps >= 2, tol > 0 and max_iters >= 1".into()));
        }
        if self.initial.dim() != 1 || self.nu.as_ref().is_some_and(|n| n.dim() != 1) {
            return Err(Error::Usage("the Picard solver works on one-dimensional laws".into()));
        }
        if let Some(g) = &self.grid {
            if g.dim() != 1 {
                return Err(Error::Usage("the Picard grid must be one-dimensional".into()));
            }
        }
        if let Backend::Particle { particles, substeps, .. } = &self.backend {
            if *particles < 2 || *substeps == 0 {
                return Err(Error::Usage("particle backend needs particles >= 2 and substeps >= 1".into()));
            }
        }
        Ok(())
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(self.start, self.start + self.horizon, self.time_steps)
    }

    /// The configured grid, or `[lo, hi]` covering `μ₀` and `ν` by eight
    /// standard deviations widened by the spread and transport over `T`.
    pub fn space_grid(&self, model: &dyn CoefficientModel) -> Result<GridSpec<f64>> {
        if let Some(g) = &self.grid {
            return Ok(g.clone());
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for m in std::iter::once(&self.initial).chain(self.nu.as_ref()) {
            let mean = m.mean()[0];
            let sd = m.variance()[0].max(0.0).sqrt();
            lo = lo.min(mean - 8.0 * sd);
            hi = hi.max(mean + 8.0 * sd);
        }
        let centre = 0.5 * (lo + hi);
        let a0 = model.diffusion(self.start, &[centre], &self.initial)?[(0, 0)];
        let b0 = model.drift(self.start, &[centre], &self.initial)?[0].abs();
        let widen = 8.0 * (a0.max(1e-12) * self.horizon).sqrt() + b0 * self.horizon;
        GridSpec::line(lo - widen, hi + widen, self.cells)
    }
}

/// One Picard iterate `P^{(m)} = 𝒯(P^{(m-1)})`.
#[derive(Debug, Clone)]
pub struct PicardState {
    pub index: usize,
    pub flow: MeasureFlow,
    /// `d_{s,T}(P^{(m)}, P^{(m-1)})`.
    pub distance_to_previous: f64,
    /// `r_k = d_k / d_{k-1}` up to this iterate.
    pub contraction_ratios: Vec<f64>,
    /// Mass of negative values clipped from the backend output.
    pub clip_mass: f64,
}

/// JSON-friendly summary of one iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub index: usize,
    pub distance: f64,
    pub ratio: Option<f64>,
    pub clip_mass: f64,
}

pub fn history_records(history: &[PicardState]) -> Vec<IterateRecord> {
    history
        .iter()
        .map(|s| IterateRecord {
            index: s.index,
            distance: s.distance_to_previous,
            ratio: if s.index >= 2 { s.contraction_ratios.last().copied() } else { None },
            clip_mass: s.clip_mass,
        })
        .collect()
}

fn to_density(m: &Measure, grid: &GridSpec<f64>, bandwidth: Option<f64>) -> Result<Vec<f64>> {
    Ok(m.project(grid, bandwidth)?.values().to_vec())
}

fn grid_flow(times: TimeGrid, grid: &GridSpec<f64>, states: Vec<Vec<f64>>) -> Result<MeasureFlow> {
    let states = states
        .into_iter()
        .map(|v| Ok(Measure::Grid(DensityGrid::from_spec(grid, v)?)))
        .collect::<Result<Vec<_>>>()?;
    MeasureFlow::new(times, states)
}

/// `𝒯(Q)`: marginals on the configured time and space grids of
/// `dX = b(t, X, Q(t)) dt + σ(t, X, Q(t)) dW`, `X_s ~ μ₀`.
pub fn picard_map(model: &dyn CoefficientModel, q: &MeasureFlow, cfg: &PicardConfig) -> Result<(MeasureFlow, f64)> {
    cfg.validate()?;
    if model.dim_x() != 1 {
        return Err(Error::Usage("the Picard map is implemented in dimension one".into()));
    }
    let times = cfg.time_grid()?;
    if !q.covers(times.start(), times.end()) {
        return Err(Error::Usage(format!(
            "input flow does not cover [{}, {}]",
            times.start(),
            times.end()
        )));
    }
    let grid = cfg.space_grid(model)?;
    let p0 = to_density(&cfg.initial, &grid, cfg.deposit_bandwidth)?;
    match &cfg.backend {
        Backend::FokkerPlanck { step } => {
            let sol = fokker_planck::solve(model, q, times.as_slice(), &grid, p0, *step)?;
            Ok((grid_flow(times, &grid, sol.states)?, sol.clip_mass))
        }
        Backend::Particle { particles, substeps, bandwidth } => {
            let mu0 = cfg.initial.to_empirical()?;
            let span = times.end() - times.start();
            let steps = cfg.time_steps * substeps;
            let sim = SimConfig {
                particles: *particles,
                dt: span / steps as f64,
                horizon: times.end(),
                seed: cfg.seed,
                record_every: *substeps,
                noise_refinement: 1,
            };
            let run = euler_decoupled_from(model, q, times.start(), &mu0, &sim)?;
            let bw = match bandwidth {
                Some(h) => Bandwidth::Fixed(vec![*h]),
                None => Bandwidth::Silverman,
            };
            let mut states = vec![p0];
            for k in 1..run.times().len() {
                states.push(kde(&run.law(k)?, &grid, &bw)?.values().to_vec());
            }
            Ok((grid_flow(times, &grid, states)?, 0.0))
        }
    }
}

/// `d_{s,T}(P, P′) = sup_t ∫ |p_t - p′_t|` over the shared time nodes.
pub fn flow_distance(p: &MeasureFlow, q: &MeasureFlow) -> Result<f64> {
    if p.times() != q.times() {
        return Err(Error::Usage("flows live on different time grids".into()));
    }
    let mut sup = 0.0f64;
    for (a, b) in p.states().iter().zip(q.states()) {
        match (a, b) {
            (Measure::Grid(a), Measure::Grid(b)) => sup = sup.max(l1_density_distance(a, b)?),
            _ => return Err(Error::Usage("flow distance needs grid-backed flows".into())),
        }
    }
    Ok(sup)
}

/// Outcome of [`picard_solve`].
#[derive(Debug, Clone)]
pub struct PicardSolution {
    pub flow: MeasureFlow,
    pub history: Vec<PicardState>,
}

impl PicardSolution {
    pub fn ratios(&self) -> &[f64] {
        self.history.last().map(|s| s.contraction_ratios.as_slice()).unwrap_or(&[])
    }

    pub fn distances(&self) -> Vec<f64> {
        self.history.iter().map(|s| s.distance_to_previous).collect()
    }
}

/// Iterates `𝒯` from the constant flow `Q⁰ ≡ ν` until
/// `d_{s,T}(P^{(m)}, P^{(m-1)}) < tol`.
pub fn picard_solve(model: &dyn CoefficientModel, cfg: &PicardConfig) -> Result<PicardSolution> {
    cfg.validate()?;
    let times = cfg.time_grid()?;
    let grid = cfg.space_grid(model)?;
    let nu = cfg.nu.as_ref().unwrap_or(&cfg.initial);
    let nu_density = to_density(nu, &grid, cfg.deposit_bandwidth)?;
    let mut prev = MeasureFlow::constant(Measure::Grid(DensityGrid::from_spec(&grid, nu_density)?), times);
    let fixed_grid = PicardConfig {
        grid: Some(grid),
        ..cfg.clone()
    };
    let mut history: Vec<PicardState> = Vec::new();
    let mut ratios: Vec<f64> = Vec::new();
    for m in 1..=cfg.max_iters {
        let (next, clip_mass) = picard_map(model, &prev, &fixed_grid)?;
        let d = flow_distance(&next, &prev)?;
        if let Some(last) = history.last() {
            let r = d / last.distance_to_previous;
            ratios.push(if r.is_nan() { 0.0 } else { r });
        }
        history.push(PicardState {
            index: m,
            flow: next.clone(),
            distance_to_previous: d,
            contraction_ratios: ratios.clone(),
            clip_mass,
        });
        prev = next;
        if d < cfg.tol {
            return Ok(PicardSolution { flow: prev, history });
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iters,
        last_distance: history.last().map_or(f64::NAN, |s| s.distance_to_previous),
        ratios,
    })
}

/// Geometric contraction rate `exp(slope)` of `log d_m` against `m`, using
/// iterates whose distance exceeds `floor`. `None` with fewer than two.
pub fn fitted_contraction_ratio(history: &[PicardState], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = history
        .iter()
        .filter(|s| s.distance_to_previous > floor)
        .map(|s| (s.index as f64, s.distance_to_previous.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Some(linear_fit(&xs, &ys).0.exp())
}

/// Density of the decoupled flow started at `x` at time `s`, with the law
/// frozen at `fixed_flow`.
pub fn decoupled_flow_density(
    model: Arc<dyn CoefficientModel>,
    fixed_flow: &MeasureFlow,
    s: f64,
    x: &[f64],
    t: f64,
    cfg: &ParametrixConfig,
) -> Result<TransitionDensity> {
    let spec = ProxySpec::new(model, Arc::new(fixed_flow.clone()), s)?;
    density_series(&spec, t, x, cfg)
}
