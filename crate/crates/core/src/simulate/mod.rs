//! Euler-Maruyama simulation of the interacting particle system and of the
//! decoupled (measure-frozen) flow.

mod ensemble;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientModel, FrozenCoefficients};
use crate::error::{Error, Result};
use crate::measures::{wasserstein2, EmpiricalMeasure, Measure, MeasureFlow};

pub use ensemble::ParticleEnsemble;

/// Stream used to resample an initial law onto `N` particles; particle `i`
/// draws its Brownian increments from stream `i`.
const SAMPLING_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub particles: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    /// Store every `record_every`-th step; the final step is always stored.
    pub record_every: usize,
    /// Each step consumes this many normals per noise dimension and uses
    /// their scaled sum as the increment, so runs with `dt·r` fixed share
    /// one Brownian path per particle.
    pub noise_refinement: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            particles: 10_000,
            dt: 1e-2,
            horizon: 1.0,
            seed: 0,
            record_every: 10,
            noise_refinement: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, start: f64) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::Usage("need at least two particles".into()));
        }
        if !(self.dt > 0.0) || !(self.horizon > start) || self.dt > self.horizon - start + 1e-12 {
            return Err(Error::Usage(format!(
                "need 0 < dt <= horizon - start, got dt = {}, horizon = {}, start = {start}",
                self.dt, self.horizon
            )));
        }
        if self.record_every == 0 || self.noise_refinement == 0 {
            return Err(Error::Usage("record_every and noise_refinement must be positive".into()));
        }
        Ok(())
    }

    /// Uniform step times from `start` to the horizon; the step is shrunk so
    /// that an integer number of steps fits.
    pub fn times(&self, start: f64) -> Vec<f64> {
        let span = self.horizon - start;
        let n = ((span / self.dt) - 1e-9).ceil().max(1.0) as usize;
        (0..=n)
            .map(|k| if k == n { self.horizon } else { start + span * k as f64 / n as f64 })
            .collect()
    }
}

/// Per-particle generator: stream `stream` of the ChaCha8 generator keyed by `seed`.
pub fn particle_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `N` draws from `μ₀`, or its atoms as they are when it already has `N`
/// equally weighted atoms.
pub fn initial_points(mu0: &EmpiricalMeasure<f64>, n: usize, seed: u64) -> Result<Vec<f64>> {
    if mu0.len() == n && mu0.is_uniform() {
        return Ok(mu0.points().to_vec());
    }
    let idx = WeightedIndex::new(mu0.weights()).map_err(|e| Error::Domain(format!("initial weights: {e}")))?;
    let mut rng = particle_rng(seed, SAMPLING_STREAM);
    let mut pts = Vec::with_capacity(n * mu0.dim());
    for _ in 0..n {
        pts.extend_from_slice(mu0.point(rng.sample(&idx)));
    }
    Ok(pts)
}

enum Environment<'a> {
    /// Coefficients frozen at the current empirical law of the particles.
    Interacting,
    /// Coefficients frozen at a prescribed flow.
    Frozen(&'a MeasureFlow),
}

fn simulate(
    model: &dyn CoefficientModel,
    env: Environment<'_>,
    start: f64,
    mut points: Vec<f64>,
    streams: &[u64],
    cfg: &SimConfig,
) -> Result<ParticleEnsemble> {
    cfg.validate(start)?;
    let d = model.dim_x();
    let q = model.dim_w();
    let n = streams.len();
    if points.len() != n * d {
        return Err(Error::Usage("initial points do not match the particle count".into()));
    }
    if let Environment::Frozen(flow) = &env {
        if !flow.covers(start, cfg.horizon) {
            return Err(Error::Usage(format!("flow does not cover [{start}, {}]", cfg.horizon)));
        }
    }
    let times = cfg.times(start);
    let steps = times.len() - 1;
    let mut rngs: Vec<ChaCha8Rng> = streams.iter().map(|s| particle_rng(cfg.seed, *s)).collect();
    let mut rec_times = vec![start];
    let mut frames = vec![points.clone()];
    let r = cfg.noise_refinement;
    for k in 0..steps {
        let (t, dt) = (times[k], times[k + 1] - times[k]);
        let law = match &env {
            Environment::Interacting => std::borrow::Cow::Owned(Measure::Empirical(EmpiricalMeasure::uniform(d, points.clone())?)),
            Environment::Frozen(flow) => flow.law_at(t)?,
        };
        let frozen: Box<dyn FrozenCoefficients + '_> = model.freeze(t, &law)?;
        let scale = (dt / r as f64).sqrt();
        points
            .par_chunks_mut(d)
            .zip(rngs.par_iter_mut())
            .for_each_init(
                || (vec![0.0; d], vec![0.0; d * q], vec![0.0; q]),
                |(b, s, dw), (x, rng)| {
                    frozen.drift_into(x, b);
                    frozen.sigma_into(x, s);
                    for w in dw.iter_mut() {
                        let mut acc = 0.0;
                        for _ in 0..r {
                            acc += rng.sample::<f64, _>(StandardNormal);
                        }
                        *w = scale * acc;
                    }
                    for i in 0..d {
                        let mut noise = 0.0;
                        for j in 0..q {
                            noise += s[i * q + j] * dw[j];
                        }
                        x[i] += b[i] * dt + noise;
                    }
                },
            );
        drop(frozen);
        if let Some(bad) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                step: k + 1,
                detail: format!("particle {} left the finite range at t = {}", bad / d, times[k + 1]),
            });
        }
        if (k + 1) % cfg.record_every == 0 || k + 1 == steps {
            rec_times.push(times[k + 1]);
            frames.push(points.clone());
        }
    }
    ParticleEnsemble::new(d, n, rec_times, frames, cfg.seed, streams.to_vec())
}

/// Interacting particle system
/// `X_{k+1} = X_k + b(t_k, X_k, μ̂_k) Δt + σ(t_k, X_k, μ̂_k) ΔW_k`,
/// with `μ̂_k` the empirical law of the particles at step `k`.
pub fn euler_mv(model: &dyn CoefficientModel, mu0: &EmpiricalMeasure<f64>, cfg: &SimConfig) -> Result<ParticleEnsemble> {
    check_dim(model, mu0.dim())?;
    let points = initial_points(mu0, cfg.particles, cfg.seed)?;
    let streams: Vec<u64> = (0..cfg.particles as u64).collect();
    simulate(model, Environment::Interacting, 0.0, points, &streams, cfg)
}

/// [`euler_mv`] with explicit initial points (one per particle) and noise
/// streams.
pub fn euler_mv_streams(
    model: &dyn CoefficientModel,
    points: &EmpiricalMeasure<f64>,
    streams: &[u64],
    cfg: &SimConfig,
) -> Result<ParticleEnsemble> {
    check_dim(model, points.dim())?;
    if points.len() != streams.len() || !points.is_uniform() {
        return Err(Error::Usage("need one equally weighted point per stream".into()));
    }
    simulate(model, Environment::Interacting, 0.0, points.points().to_vec(), streams, cfg)
}

/// Independent paths of the decoupled SDE started at `x` at time `s`, with
/// coefficients frozen at `flow(t)`.
pub fn euler_decoupled(
    model: &dyn CoefficientModel,
    flow: &MeasureFlow,
    s: f64,
    x: &[f64],
    cfg: &SimConfig,
) -> Result<ParticleEnsemble> {
    let start = EmpiricalMeasure::dirac(x)?;
    euler_decoupled_from(model, flow, s, &start, cfg)
}

/// [`euler_decoupled`] with the start point drawn from `mu0`.
pub fn euler_decoupled_from(
    model: &dyn CoefficientModel,
    flow: &MeasureFlow,
    s: f64,
    mu0: &EmpiricalMeasure<f64>,
    cfg: &SimConfig,
) -> Result<ParticleEnsemble> {
    check_dim(model, mu0.dim())?;
    if flow.dim() != model.dim_x() {
        return Err(Error::Usage("flow dimension does not match the model".into()));
    }
    let points = initial_points(mu0, cfg.particles, cfg.seed)?;
    let streams: Vec<u64> = (0..cfg.particles as u64).collect();
    simulate(model, Environment::Frozen(flow), s, points, &streams, cfg)
}

fn check_dim(model: &dyn CoefficientModel, d: usize) -> Result<()> {
    if d != model.dim_x() {
        return Err(Error::Usage(format!(
            "initial law has dimension {d}, model has dimension {}",
            model.dim_x()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct ChaosRow {
    pub particles: usize,
    /// `W₂` between the terminal empirical law and the reference marginal.
    pub w2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChaosTable {
    pub rows: Vec<ChaosRow>,
    /// Number of consecutive pairs where `W₂` increased with `N`.
    pub inversions: usize,
}

impl ChaosTable {
    /// Non-increasing in `N` up to at most one inversion.
    pub fn acceptable(&self) -> bool {
        self.inversions <= 1
    }
}

/// Terminal `W₂` distance to a reference marginal for increasing particle counts.
pub fn chaos_convergence(
    model: &dyn CoefficientModel,
    mu0: &EmpiricalMeasure<f64>,
    ns: &[usize],
    reference: &Measure,
    cfg: &SimConfig,
) -> Result<ChaosTable> {
    if ns.is_empty() || ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Usage("particle counts must be strictly increasing".into()));
    }
    let reference = reference.to_empirical()?;
    let mut rows = Vec::new();
    for &n in ns {
        let run = euler_mv(model, mu0, &SimConfig { particles: n, ..cfg.clone() })?;
        rows.push(ChaosRow {
            particles: n,
            w2: wasserstein2(&run.terminal()?, &reference)?,
        });
    }
    let inversions = rows.windows(2).filter(|w| w[1].w2 > w[0].w2).count();
    Ok(ChaosTable { rows, inversions })
}
