use crate::error::{Error, Result};
use crate::measures::GridSpec;
use crate::quadrature::LegendreRule;

/// Discretization of a pointwise space-time convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolveConfig {
    /// Gauss-Legendre nodes on each half of `[r, t]`.
    pub time_nodes: usize,
    /// Exponent of the substitution `v = r + u^p` (resp. `t - u^p`) on each half.
    pub power: u32,
    /// Trapezoid grid for the `z` integral.
    pub z_grid: GridSpec<f64>,
    /// Maximum number of integrand evaluations.
    pub budget: usize,
}

impl ConvolveConfig {
    pub fn new(z_grid: GridSpec<f64>) -> Self {
        Self {
            time_nodes: 16,
            power: 2,
            z_grid,
            budget: 50_000_000,
        }
    }
}

/// `∫_r^t ∫ F(r, v, x, z) G(v, t, z, y) dz dv` in dimension one.
///
/// The time integral is split at the midpoint and each half uses a power
/// substitution towards its endpoint, which absorbs integrable singularities
/// of the form `(v - r)^{-1+1/p}` and `(t - v)^{-1+1/p}`.
pub fn spacetime_convolve<F, G>(f: F, g: G, r: f64, t: f64, x: f64, y: f64, cfg: &ConvolveConfig) -> Result<f64>
where
    F: Fn(f64, f64, f64, f64) -> Result<f64>,
    G: Fn(f64, f64, f64, f64) -> Result<f64>,
{
    if !(t > r) {
        return Err(Error::Usage(format!("convolution needs r < t, got r = {r}, t = {t}")));
    }
    if cfg.z_grid.dim() != 1 {
        return Err(Error::Usage("the convolution grid must be one-dimensional".into()));
    }
    let nz = cfg.z_grid.cells[0] + 1;
    let evals = 2 * cfg.time_nodes * nz;
    if evals > cfg.budget {
        return Err(Error::Resource(format!(
            "convolution needs {evals} integrand pairs, budget is {}",
            cfg.budget
        )));
    }
    let rule = LegendreRule::new(cfg.time_nodes)?;
    let z = cfg.z_grid.axis(0);
    let h = cfg.z_grid.spacing()[0];
    let mut total = 0.0;
    for (v, w) in rule.split_power(r, t, cfg.power) {
        if !(v > r && v < t) {
            continue;
        }
        let mut inner = 0.0;
        for (j, &zj) in z.iter().enumerate() {
            let gv = g(v, t, zj, y)?;
            if gv == 0.0 {
                continue;
            }
            let wz = if j == 0 || j + 1 == nz { 0.5 * h } else { h };
            inner += wz * f(r, v, x, zj)? * gv;
        }
        total += w * inner;
    }
    Ok(total)
}
