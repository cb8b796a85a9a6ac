use serde::{Deserialize, Serialize};

use super::{need, Method, SolutionEvaluator, TestFunction};
use crate::coefficients::CoefficientModel;
use crate::error::{Error, Result};
use crate::measures::{EmpiricalMeasure, Measure, MeasureFlow, TimeGrid};
use crate::numeric::linear_fit;
use crate::picard::PicardConfig;
use crate::simulate::{euler_decoupled_from, euler_mv, initial_points, SimConfig};

/// Finite-difference steps of [`residual_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdConfig {
    /// Spatial step.
    pub dx: f64,
    /// Time step as a fraction of `T - t`.
    pub dt_rel: f64,
    /// Time of the lifted perturbation used for the measure terms.
    pub measure_step: f64,
    /// Measures with more atoms are resampled to this many.
    pub representatives: usize,
    pub seed: u64,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            dx: 1e-2,
            dt_rel: 1e-3,
            measure_step: 1e-3,
            representatives: 512,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ResidualPoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub mu: EmpiricalMeasure<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    /// `|∂_t U + ℒ_t U - f|` per sample point.
    pub residuals: Vec<f64>,
    pub max: f64,
    pub median: f64,
}

/// `μ` pushed along one Euler step of length `eps` of the frozen dynamics,
/// with a symmetric two-point increment: every atom `z` becomes
/// `z + eps b(z) ± √eps σ(z)` with half its weight.
fn lifted_step(model: &dyn CoefficientModel, t: f64, mu: &EmpiricalMeasure<f64>, eps: f64) -> Result<Measure> {
    let law = Measure::Empirical(mu.clone());
    let fr = model.freeze(t, &law)?;
    let mut points = Vec::with_capacity(2 * mu.len());
    let mut weights = Vec::with_capacity(2 * mu.len());
    for (z, w) in mu.iter() {
        let b = fr.drift(z)[0];
        let s = fr.diffusion(z)[(0, 0)].sqrt();
        for sign in [-1.0, 1.0] {
            points.push(z[0] + eps * b + sign * (eps.sqrt() * s));
            weights.push(0.5 * w);
        }
    }
    Ok(Measure::Empirical(EmpiricalMeasure::new(1, points, weights)?))
}

/// The evaluator with one Picard grid for every evaluation at a sample
/// point, and a Gaussian deposit of two cells when none is set: a linear
/// deposit does not see sub-cell spreading of the lifted atoms.
fn pinned(eval: &SolutionEvaluator, start: f64, law: &Measure) -> Result<SolutionEvaluator> {
    let mut out = eval.clone();
    if out.picard.grid.is_none() {
        let cfg = PicardConfig {
            start,
            horizon: eval.data.horizon - start,
            initial: law.clone(),
            ..eval.picard.clone()
        };
        out.picard.grid = Some(cfg.space_grid(eval.model.as_ref())?);
    }
    if out.picard.deposit_bandwidth.is_none() {
        out.picard.deposit_bandwidth = Some(2.0 * out.picard.grid.as_ref().expect("set above").spacing()[0]);
    }
    Ok(out)
}

/// Residual of the Cauchy equation for the evaluated `U` at sample points,
/// by central differences in `t` and `x` and a lifted Itô step in `μ`
/// (Richardson-extrapolated over two step sizes). One-dimensional states only.
pub fn residual_check(eval: &SolutionEvaluator, points: &[ResidualPoint], fd: &FdConfig) -> Result<ResidualReport> {
    if eval.model.dim_x() != 1 {
        return Err(Error::Usage("residual checks support one-dimensional states".into()));
    }
    if points.is_empty() {
        return Err(Error::Usage("residual check needs sample points".into()));
    }
    if !(fd.dx > 0.0 && fd.dt_rel > 0.0 && fd.dt_rel < 0.5 && fd.measure_step > 0.0 && fd.representatives > 0) {
        return Err(Error::Usage("finite-difference steps must be positive, with dt_rel < 1/2".into()));
    }
    if let Method::ParametrixQuadrature { parametrix, .. } = &eval.method {
        if let Some(g) = &parametrix.space_grid {
            if fd.dx < g.spacing()[0] {
                return Err(Error::Usage(format!(
                    "spatial step {} is below the density grid spacing {}",
                    fd.dx,
                    g.spacing()[0]
                )));
            }
        }
    }
    let horizon = eval.data.horizon;
    let mut residuals = Vec::with_capacity(points.len());
    for p in points {
        if p.x.len() != 1 || p.mu.dim() != 1 {
            return Err(Error::Usage("sample points and measures must be one-dimensional".into()));
        }
        let dt = fd.dt_rel * (horizon - p.t);
        if !(p.t < horizon - 2.0 * dt) || dt <= 0.0 {
            return Err(Error::Usage(format!("sample time {} is not interior to [0, {horizon})", p.t)));
        }
        let mu = if p.mu.len() > fd.representatives {
            EmpiricalMeasure::uniform(1, initial_points(&p.mu, fd.representatives, fd.seed)?)?
        } else {
            p.mu.clone()
        };
        let law = Measure::Empirical(mu.clone());
        let (t, x) = (p.t, p.x[0]);
        let eval = pinned(eval, t - dt, &law)?;
        let u = |t: f64, x: f64, m: &Measure| -> Result<f64> { Ok(eval.value(t, &[x], m)?.value) };
        let u0 = u(t, x, &law)?;
        let u_t = (u(t + dt, x, &law)? - u(t - dt, x, &law)?) / (2.0 * dt);
        let (up, um) = (u(t, x + fd.dx, &law)?, u(t, x - fd.dx, &law)?);
        let u_x = (up - um) / (2.0 * fd.dx);
        let u_xx = (up - 2.0 * u0 + um) / (fd.dx * fd.dx);
        let eps = fd.measure_step;
        let coarse = (u(t, x, &lifted_step(eval.model.as_ref(), t, &mu, eps)?)? - u0) / eps;
        let fine = (u(t, x, &lifted_step(eval.model.as_ref(), t, &mu, eps / 2.0)?)? - u0) / (eps / 2.0);
        let measure_term = 2.0 * fine - coarse;
        let fr = eval.model.freeze(t, &law)?;
        let local = fr.drift(&[x])[0] * u_x + 0.5 * fr.diffusion(&[x])[(0, 0)] * u_xx;
        let f = eval.data.source.as_ref().map_or(0.0, |f| f(t, &[x], &law));
        let r = u_t + local + measure_term - f;
        if !r.is_finite() {
            return Err(Error::Numeric {
                step: 0,
                detail: format!("non-finite residual at t = {t}, x = {x}"),
            });
        }
        residuals.push(r.abs());
    }
    let mut sorted = residuals.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    Ok(ResidualReport {
        max: sorted[n - 1],
        median,
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainRuleConfig {
    pub particles: usize,
    pub dt: f64,
    pub horizon: f64,
    /// Independent batches for the standard error.
    pub batches: usize,
    pub seed: u64,
}

impl Default for ChainRuleConfig {
    fn default() -> Self {
        Self {
            particles: 400,
            dt: 1e-2,
            horizon: 1.0,
            batches: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainRuleReport {
    /// `E[U(T, Y_T, μ_T) - U(0, Y_0, μ_0)]`.
    pub lhs: f64,
    /// `E ∫ (∂_t U + ℒ U)(s, Y_s, μ_s) ds`, generator taken along `(Y, μ)`.
    pub rhs: f64,
    pub discrepancy: f64,
    pub standard_error: f64,
}

/// Itô formula along a flow of measures: `X` is the particle system of
/// `model_x` started from `mu_x0` with empirical laws `μ_t`, and `Y`
/// follows `model_y` with its coefficients frozen at `μ_t`. Compares both
/// sides of `dU(t, Y_t, μ_t)` integrated over `[0, T]`.
pub fn chain_rule_check(
    u: &TestFunction,
    model_x: &dyn CoefficientModel,
    model_y: &dyn CoefficientModel,
    mu_x0: &EmpiricalMeasure<f64>,
    y0: &EmpiricalMeasure<f64>,
    cfg: &ChainRuleConfig,
) -> Result<ChainRuleReport> {
    let value = need(&u.value, "value")?;
    let dt_cb = need(&u.dt, "dt")?;
    let (dy, dyy, dmu, dv_dmu) = (need(&u.dx, "dx")?, need(&u.dxx, "dxx")?, need(&u.dmu, "dmu")?, need(&u.dv_dmu, "dv_dmu")?);
    if model_x.dim_x() != model_y.dim_x() {
        return Err(Error::Usage("the two processes must share the state dimension".into()));
    }
    if cfg.batches < 2 {
        return Err(Error::Usage("chain-rule check needs at least two batches".into()));
    }
    let d = model_x.dim_x();
    let sim = SimConfig {
        particles: cfg.particles,
        dt: cfg.dt,
        horizon: cfg.horizon,
        seed: 0,
        record_every: 1,
        noise_refinement: 1,
    };
    let mut lhs = Vec::with_capacity(cfg.batches);
    let mut rhs = Vec::with_capacity(cfg.batches);
    for b in 0..cfg.batches as u64 {
        let xs = euler_mv(model_x, mu_x0, &SimConfig { seed: cfg.seed.wrapping_add(2 * b), ..sim.clone() })?;
        let times = xs.times().to_vec();
        let laws: Vec<Measure> = (0..times.len()).map(|k| xs.law(k).map(Measure::Empirical)).collect::<Result<_>>()?;
        let flow = MeasureFlow::new(TimeGrid::new(times.clone())?, laws)?;
        let ys = euler_decoupled_from(model_y, &flow, 0.0, y0, &SimConfig { seed: cfg.seed.wrapping_add(2 * b + 1), ..sim.clone() })?;
        let last = times.len() - 1;
        let (mut l, mut r) = (0.0, 0.0);
        for k in 0..=last {
            let (t, mu) = (times[k], &flow.states()[k]);
            let frame = ys.frame(k);
            if k == 0 || k == last {
                let sign = if k == 0 { -1.0 } else { 1.0 };
                l += sign * frame.chunks(d).map(|y| value(t, y, mu)).sum::<f64>();
            }
            if k == last {
                break;
            }
            let h = times[k + 1] - t;
            let fy = model_y.freeze(t, mu)?;
            let fx = model_x.freeze(t, mu)?;
            let bx: Vec<(Vec<f64>, Vec<f64>, f64)> = {
                let mut v = Vec::new();
                mu.for_each(|z, w| {
                    let a = fx.diffusion(z);
                    v.push((z.to_vec(), fx.drift(z).iter().copied().chain(a.iter().copied()).collect(), w));
                });
                v
            };
            for y in frame.chunks(d) {
                let (by, ay) = (fy.drift(y), fy.diffusion(y));
                let (g, hess) = (dy(t, y, mu), dyy(t, y, mu));
                let mut gen = dt_cb(t, y, mu);
                for i in 0..d {
                    gen += by[i] * g[i];
                    for j in 0..d {
                        gen += 0.5 * ay[(i, j)] * hess[i * d + j];
                    }
                }
                for (z, coef, w) in &bx {
                    let (m1, m2) = (dmu(t, y, mu, z), dv_dmu(t, y, mu, z));
                    let mut acc = 0.0;
                    for i in 0..d {
                        acc += coef[i] * m1[i];
                        for j in 0..d {
                            // nalgebra storage is column-major.
                            acc += 0.5 * coef[d + j * d + i] * m2[i * d + j];
                        }
                    }
                    gen += w * acc;
                }
                r += h * gen;
            }
        }
        let n = ys.particles() as f64;
        lhs.push(l / n);
        rhs.push(r / n);
    }
    let nb = cfg.batches as f64;
    let diffs: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    let mean_diff = diffs.iter().sum::<f64>() / nb;
    let var = diffs.iter().map(|v| (v - mean_diff).powi(2)).sum::<f64>() / (nb - 1.0);
    Ok(ChainRuleReport {
        lhs: lhs.iter().sum::<f64>() / nb,
        rhs: rhs.iter().sum::<f64>() / nb,
        discrepancy: mean_diff.abs(),
        standard_error: (var / nb).sqrt(),
    })
}

/// A sample `(t, x, μ)` with the value of `U` there.
#[derive(Debug, Clone)]
pub struct GrowthSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub mu: Measure,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    /// `max |U| / (exp(k|x|²/T) (1 + M₂(μ)^q))`.
    pub c_fit: f64,
    /// The same maximum over `|x| ≤ split` and over `|x| > split`.
    pub c_inner: Option<f64>,
    pub c_outer: Option<f64>,
    /// Exponent of `1 + M₂` fitted from the per-measure maxima; `None`
    /// with fewer than two distinct second moments.
    pub q_fit: Option<f64>,
    /// `c_inner` and `c_outer` within a factor 3.
    pub stable: bool,
    /// `q_fit > q + 0.1`.
    pub q_exceeded: bool,
    pub passed: bool,
}

/// Fits the constant of `|U| ≤ C exp(k|x|²/T)(1 + M₂^q)` on samples.
pub fn growth_bound_check(samples: &[GrowthSample], horizon: f64, k: f64, q: f64, split: f64) -> Result<GrowthReport> {
    if samples.is_empty() {
        return Err(Error::Usage("growth check needs samples".into()));
    }
    if !(horizon > 0.0) {
        return Err(Error::Usage("horizon must be positive".into()));
    }
    let r2 = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
    let mut c_fit = 0.0f64;
    let (mut inner, mut outer) = (None::<f64>, None::<f64>);
    // Per-measure maxima of |U| exp(-k|x|²/T), keyed by M₂.
    let mut per_measure: Vec<(f64, f64)> = Vec::new();
    for s in samples {
        let m2 = s.mu.moment2();
        let spatial = s.value.abs() * (-k * r2(&s.x) / horizon).exp();
        let c = spatial / (1.0 + m2.powf(q));
        c_fit = c_fit.max(if c.is_nan() { f64::INFINITY } else { c });
        let slot = if r2(&s.x).sqrt() <= split { &mut inner } else { &mut outer };
        *slot = Some(slot.map_or(c, |v| v.max(c)));
        match per_measure.iter_mut().find(|(m, _)| (*m - m2).abs() <= 1e-12 * (1.0 + m2)) {
            Some(entry) => entry.1 = entry.1.max(spatial),
            None => per_measure.push((m2, spatial)),
        }
    }
    let q_fit = if per_measure.len() >= 2 && per_measure.iter().all(|(_, a)| *a > 0.0) {
        let xs: Vec<f64> = per_measure.iter().map(|(m, _)| (1.0 + m).ln()).collect();
        let ys: Vec<f64> = per_measure.iter().map(|(_, a)| a.ln()).collect();
        Some(linear_fit(&xs, &ys).0)
    } else {
        None
    };
    let stable = match (inner, outer) {
        (Some(a), Some(b)) => a.is_finite() && b.is_finite() && a.max(b) <= 3.0 * a.min(b),
        _ => c_fit.is_finite(),
    };
    let q_exceeded = q_fit.is_some_and(|v| v > q + 0.1);
    Ok(GrowthReport {
        c_fit,
        c_inner: inner,
        c_outer: outer,
        q_fit,
        stable,
        q_exceeded,
        passed: c_fit.is_finite() && stable && !q_exceeded,
    })
}
