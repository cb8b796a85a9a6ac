use std::sync::{Arc, Mutex};

use crate::coefficients::CoefficientModel;
use crate::error::{Error, Result};
use crate::lions::{raw_flat, with_atom, MeasureFunctional, FLAT_EPS};
use crate::measures::{DensityGrid, EmpiricalMeasure, GridSpec, Measure, MeasureFlow, TimeGrid};
use crate::parametrix::{density_series, trapezoid, ParametrixConfig, ProxySpec};
use crate::picard::{picard_solve, PicardConfig};

/// Source of decoupled-flow densities `z ↦ p(μ, t, T, x, z)` for a fixed
/// horizon `T`, in dimension one.
pub trait DensityProvider: Send + Sync {
    fn horizon(&self) -> f64;

    /// Density values at the nodes of `grid`.
    fn density(&self, mu: &EmpiricalMeasure<f64>, t: f64, x: f64, grid: &GridSpec<f64>) -> Result<Vec<f64>>;

    /// True when `p` does not depend on `μ`.
    fn measure_independent(&self) -> bool {
        false
    }
}

fn check_time(t: f64, horizon: f64) -> Result<()> {
    if !(t < horizon) {
        return Err(Error::Usage(format!("need t < T, got t = {t}, T = {horizon}")));
    }
    Ok(())
}

/// Exact density of `x + σ W_{T-t}`.
pub struct HeatDensity {
    pub sigma: f64,
    pub horizon: f64,
}

impl DensityProvider for HeatDensity {
    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn density(&self, _mu: &EmpiricalMeasure<f64>, t: f64, x: f64, grid: &GridSpec<f64>) -> Result<Vec<f64>> {
        check_time(t, self.horizon)?;
        let var = self.sigma * self.sigma * (self.horizon - t);
        let c = 1.0 / (std::f64::consts::TAU * var).sqrt();
        Ok(grid.axis(0).iter().map(|z| c * (-0.5 * (z - x) * (z - x) / var).exp()).collect())
    }

    fn measure_independent(&self) -> bool {
        true
    }
}

/// Parametrix density of the decoupled flow, with the law flow obtained by
/// a Picard solve started from `(t, μ)`. The last flow is cached.
pub struct ParametrixDensity {
    model: Arc<dyn CoefficientModel>,
    horizon: f64,
    picard: PicardConfig,
    parametrix: ParametrixConfig,
    cache: Mutex<Option<(String, Arc<MeasureFlow>)>>,
}

impl ParametrixDensity {
    /// `picard` supplies the solver settings; its start, horizon and initial
    /// law are replaced per call.
    pub fn new(model: Arc<dyn CoefficientModel>, horizon: f64, picard: PicardConfig, parametrix: ParametrixConfig) -> Self {
        Self {
            model,
            horizon,
            picard,
            parametrix,
            cache: Mutex::new(None),
        }
    }

    pub fn flow(&self, mu: &EmpiricalMeasure<f64>, t: f64) -> Result<Arc<MeasureFlow>> {
        check_time(t, self.horizon)?;
        let law = Measure::Empirical(mu.clone());
        let key = MeasureFlow::constant(law.clone(), TimeGrid::new(vec![t])?).fingerprint();
        let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        if let Some((k, flow)) = cache.as_ref() {
            if *k == key {
                return Ok(flow.clone());
            }
        }
        let cfg = PicardConfig {
            start: t,
            horizon: self.horizon - t,
            initial: law,
            nu: None,
            ..self.picard.clone()
        };
        let flow = Arc::new(picard_solve(self.model.as_ref(), &cfg)?.flow);
        *cache = Some((key, flow.clone()));
        Ok(flow)
    }
}

impl DensityProvider for ParametrixDensity {
    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn density(&self, mu: &EmpiricalMeasure<f64>, t: f64, x: f64, grid: &GridSpec<f64>) -> Result<Vec<f64>> {
        let flow = self.flow(mu, t)?;
        let spec = ProxySpec::new(self.model.clone(), flow, t)?;
        let cfg = ParametrixConfig {
            space_grid: Some(grid.clone()),
            ..self.parametrix.clone()
        };
        Ok(density_series(&spec, self.horizon, &[x], &cfg)?.values.values().to_vec())
    }

    fn measure_independent(&self) -> bool {
        self.model.measure_independent()
    }
}

/// `h ∘ Θ(t, ·)` with `Θ(t, μ)(dz) = ∫ p(μ, t, T, x, z) μ(dx) dz`, and the
/// difference steps used by the derivative formulas.
#[derive(Clone)]
pub struct FlowComposition {
    pub h: Arc<dyn MeasureFunctional>,
    pub density: Arc<dyn DensityProvider>,
    /// Quadrature grid in `z`.
    pub grid: GridSpec<f64>,
    /// Step of the differences in the start point `x`.
    pub x_step: f64,
    /// Step of the differences in the start time `t`.
    pub t_step: f64,
    /// Step of the lifted differences in the particle position.
    pub lift_step: f64,
}

impl FlowComposition {
    pub fn new(h: Arc<dyn MeasureFunctional>, density: Arc<dyn DensityProvider>, grid: GridSpec<f64>) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(Error::Usage("flow compositions are implemented in dimension one".into()));
        }
        Ok(Self {
            h,
            density,
            grid,
            x_step: 1e-2,
            t_step: 1e-3,
            lift_step: 1e-3,
        })
    }

    fn mixture(&self, mu: &EmpiricalMeasure<f64>, t: f64) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.grid.len()];
        for (x, w) in mu.iter() {
            for (a, p) in acc.iter_mut().zip(self.density.density(mu, t, x[0], &self.grid)?) {
                *a += w * p;
            }
        }
        Ok(acc)
    }

    /// `Θ(t, μ)` as a normalized grid density.
    pub fn theta(&self, t: f64, mu: &EmpiricalMeasure<f64>) -> Result<DensityGrid<f64>> {
        if mu.dim() != 1 {
            return Err(Error::Usage("flow compositions are implemented in dimension one".into()));
        }
        DensityGrid::from_spec(&self.grid, self.mixture(mu, t)?)?.normalized()
    }

    fn spacing(&self) -> f64 {
        self.grid.spacing()[0]
    }
}

/// `y ↦ δh/δm(Θ)(y)` up to an additive constant.
struct FlatAt<'a> {
    h: &'a dyn MeasureFunctional,
    law: Measure,
    cloud: EmpiricalMeasure<f64>,
    h0: f64,
}

impl<'a> FlatAt<'a> {
    fn new(h: &'a dyn MeasureFunctional, theta: DensityGrid<f64>) -> Result<Self> {
        let law = Measure::Grid(theta);
        let cloud = law.to_empirical()?.into_owned();
        let h0 = h.eval(&Measure::Empirical(cloud.clone()))?;
        Ok(Self { h, law, cloud, h0 })
    }

    fn at(&self, y: f64) -> Result<f64> {
        if let Some(v) = self.h.flat_derivative(&self.law, &[y])? {
            return Ok(v);
        }
        let r1 = raw_flat(self.h, &self.cloud, self.h0, &[y], FLAT_EPS)?;
        let r2 = raw_flat(self.h, &self.cloud, self.h0, &[y], 0.5 * FLAT_EPS)?;
        Ok(2.0 * r2 - r1)
    }

    fn profile(&self, z: &[f64]) -> Result<Vec<f64>> {
        z.iter().map(|z| self.at(*z)).collect()
    }
}

fn pairing(phi: &[f64], base: f64, kernel: &[f64], h: f64) -> f64 {
    let v: Vec<f64> = phi.iter().zip(kernel).map(|(p, k)| (p - base) * k).collect();
    trapezoid(&v, h)
}

/// `∂ⁿ_y [∂_μ h(Θ(t, μ))](y)` for `n ∈ {0, 1}` from
///
/// `∫ [δh/δm(Θ)(z) - δh/δm(Θ)(y)] ∂^{1+n}_x p(μ, t, T, y, z) dz`
/// `+ ∬ [δh/δm(Θ)(z) - δh/δm(Θ)(x)] ∂ⁿ_y[∂_μ p(μ, t, T, x, z)](y) dz μ(dx)`.
///
/// `x`-derivatives of `p` are central differences. The second term is
/// skipped for measure-independent densities; otherwise `∂_μ p` is the
/// empirical lifting at a particle placed at `y` (added to `μ` when absent),
/// and its `y`-derivative the lifted second difference, which carries an
/// `O(1/N)` bias.
pub fn composed_flow_derivative(fc: &FlowComposition, t: f64, mu: &EmpiricalMeasure<f64>, y: f64, n: u8) -> Result<f64> {
    if n > 1 {
        return Err(Error::Usage(format!("derivative order {n} is not available (0 or 1)")));
    }
    check_time(t, fc.density.horizon())?;
    let z = fc.grid.axis(0);
    let hz = fc.spacing();
    let flat = FlatAt::new(fc.h.as_ref(), fc.theta(t, mu)?)?;
    let phi = flat.profile(&z)?;

    let d = fc.x_step;
    let p = |x: f64| fc.density.density(mu, t, x, &fc.grid);
    let (up, down) = (p(y + d)?, p(y - d)?);
    let kernel: Vec<f64> = if n == 0 {
        up.iter().zip(&down).map(|(u, w)| (u - w) / (2.0 * d)).collect()
    } else {
        let mid = p(y)?;
        (0..z.len()).map(|j| (up[j] - 2.0 * mid[j] + down[j]) / (d * d)).collect()
    };
    let mut total = pairing(&phi, flat.at(y)?, &kernel, hz);

    if !fc.density.measure_independent() {
        let (cloud, i) = with_atom(mu, &[y])?;
        let big_n = cloud.len() as f64;
        let e = fc.lift_step;
        let moved = |shift: f64| cloud.with_point(i, &[y + shift]);
        let (m_up, m_down, m_mid) = (moved(e), moved(-e), cloud.clone());
        for (x, w) in mu.iter() {
            let x = x[0];
            let fu = fc.density.density(&m_up, t, x, &fc.grid)?;
            let fd = fc.density.density(&m_down, t, x, &fc.grid)?;
            let lifted: Vec<f64> = if n == 0 {
                fu.iter().zip(&fd).map(|(a, b)| big_n * (a - b) / (2.0 * e)).collect()
            } else {
                let fm = fc.density.density(&m_mid, t, x, &fc.grid)?;
                (0..z.len()).map(|j| big_n * (fu[j] - 2.0 * fm[j] + fd[j]) / (e * e)).collect()
            };
            total += w * pairing(&phi, flat.at(x)?, &lifted, hz);
        }
    }
    Ok(total)
}

/// `∂_t h(Θ(t, μ)) = ∬ [δh/δm(Θ)(z) - δh/δm(Θ)(x)] ∂_t p(μ, t, T, x, z) dz μ(dx)`,
/// with `∂_t p` a central difference in the start time.
pub fn composed_flow_time_derivative(fc: &FlowComposition, t: f64, mu: &EmpiricalMeasure<f64>) -> Result<f64> {
    let dt = fc.t_step;
    check_time(t + dt, fc.density.horizon())?;
    let z = fc.grid.axis(0);
    let flat = FlatAt::new(fc.h.as_ref(), fc.theta(t, mu)?)?;
    let phi = flat.profile(&z)?;
    let mut total = 0.0;
    for (x, w) in mu.iter() {
        let x = x[0];
        let up = fc.density.density(mu, t + dt, x, &fc.grid)?;
        let down = fc.density.density(mu, t - dt, x, &fc.grid)?;
        let dp: Vec<f64> = up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * dt)).collect();
        total += w * pairing(&phi, flat.at(x)?, &dp, fc.spacing());
    }
    Ok(total)
}

/// `μ ↦ h(Θ(t, μ))` as a functional, for direct differentiation.
pub struct ComposedFunctional {
    pub composition: FlowComposition,
    pub t: f64,
}

impl MeasureFunctional for ComposedFunctional {
    fn name(&self) -> &str {
        "composed"
    }

    fn eval(&self, mu: &Measure) -> Result<f64> {
        let cloud = mu.to_empirical()?;
        let theta = self.composition.theta(self.t, &cloud)?;
        self.composition.h.eval(&Measure::Grid(theta))
    }
}
