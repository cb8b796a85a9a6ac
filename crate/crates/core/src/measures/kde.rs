use crate::error::{Error, Result};
use crate::measures::{DensityGrid, EmpiricalMeasure, GridSpec};
use crate::numeric::exact_sum;
use crate::scalar::Real;

/// Kernel bandwidth (standard deviation per axis).
#[derive(Debug, Clone, PartialEq)]
pub enum Bandwidth {
    /// Silverman's rule of thumb, per axis.
    Silverman,
    /// Explicit per-axis standard deviations (a single entry applies to all axes).
    Fixed(Vec<f64>),
}

/// Per-axis Silverman bandwidths of a particle cloud.
pub fn silverman_bandwidth<T: Real>(mu: &EmpiricalMeasure<T>) -> Vec<f64> {
    let d = mu.dim();
    let n_eff = {
        let w2 = exact_sum(mu.weights().iter().map(|w| w.as_f64() * w.as_f64()));
        1.0 / w2
    };
    let var = mu.variance();
    (0..d)
        .map(|k| {
            let sd = var[k].as_f64().max(0.0).sqrt();
            if d == 1 {
                let iqr = weighted_iqr(mu, k);
                let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
                0.9 * spread * n_eff.powf(-0.2)
            } else {
                let df = d as f64;
                (4.0 / (df + 2.0)).powf(1.0 / (df + 4.0)) * sd * n_eff.powf(-1.0 / (df + 4.0))
            }
        })
        .collect()
}

fn weighted_iqr<T: Real>(mu: &EmpiricalMeasure<T>, k: usize) -> f64 {
    let mut v: Vec<(f64, f64)> = mu.iter().map(|(p, w)| (p[k].as_f64(), w.as_f64())).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let q = |level: f64| {
        let mut acc = 0.0;
        for (x, w) in &v {
            acc += w;
            if acc >= level {
                return *x;
            }
        }
        v.last().map(|p| p.0).unwrap_or(0.0)
    };
    q(0.75) - q(0.25)
}

/// Default grid for a particle cloud: mean ± 8 standard deviations per axis,
/// widened by the kernel bandwidth, with 1024 cells (d = 1) or 256 (d ≥ 2).
pub fn default_grid<T: Real>(mu: &EmpiricalMeasure<T>, bandwidth: &[f64]) -> Result<GridSpec<f64>> {
    let d = mu.dim();
    let mean = mu.mean();
    let var = mu.variance();
    let cells = if d == 1 { 1024 } else { 256 };
    let mut lo = Vec::with_capacity(d);
    let mut hi = Vec::with_capacity(d);
    for k in 0..d {
        let bw = bandwidth.get(k).or(bandwidth.first()).copied().unwrap_or(0.0);
        let half = 8.0 * (var[k].as_f64() + bw * bw).sqrt();
        let half = if half > 0.0 { half } else { 1.0 };
        lo.push(mean[k].as_f64() - half);
        hi.push(mean[k].as_f64() + half);
    }
    GridSpec::new(lo, hi, vec![cells; d])
}

/// Gaussian kernel density estimate on a grid, renormalized to unit trapezoid mass.
///
/// Each node gathers contributions from particles within nine bandwidths,
/// visiting them in sorted order so the result does not depend on particle order.
pub fn kde<T: Real>(mu: &EmpiricalMeasure<T>, grid: &GridSpec<f64>, bandwidth: &Bandwidth) -> Result<DensityGrid<f64>> {
    let d = mu.dim();
    if mu.is_empty() {
        return Err(Error::Usage("cannot estimate a density from an empty measure".into()));
    }
    if grid.dim() != d {
        return Err(Error::Usage("grid and measure dimensions differ".into()));
    }
    let bw: Vec<f64> = match bandwidth {
        Bandwidth::Silverman => silverman_bandwidth(mu),
        Bandwidth::Fixed(v) if v.len() == 1 => vec![v[0]; d],
        Bandwidth::Fixed(v) if v.len() == d => v.clone(),
        Bandwidth::Fixed(_) => return Err(Error::Usage("bandwidth length must be 1 or the dimension".into())),
    };
    let spacing = grid.spacing();
    let bw: Vec<f64> = bw
        .iter()
        .zip(&spacing)
        .map(|(h, dx)| if *h > 0.0 { *h } else { *dx })
        .collect();
    if bw.iter().any(|h| !h.is_finite()) {
        return Err(Error::Domain("bandwidth must be positive and finite".into()));
    }
    let mut atoms: Vec<(Vec<f64>, f64)> = mu
        .iter()
        .map(|(p, w)| (p.iter().map(|v| v.as_f64()).collect(), w.as_f64()))
        .collect();
    atoms.sort_by(|a, b| {
        a.0.iter()
            .zip(&b.0)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.total_cmp(&b.1))
    });
    let first: Vec<f64> = atoms.iter().map(|a| a.0[0]).collect();
    let norm: f64 = bw
        .iter()
        .map(|h| 1.0 / (h * std::f64::consts::TAU.sqrt()))
        .product();
    let reach = 9.0 * bw[0];
    let template = DensityGrid::from_spec(grid, vec![0.0; grid.len()])?;
    let values: Vec<f64> = (0..template.len())
        .map(|i| {
            let z = template.node(i);
            let lo = first.partition_point(|x| *x < z[0] - reach);
            let hi = first.partition_point(|x| *x <= z[0] + reach);
            let mut acc = 0.0;
            for (p, w) in &atoms[lo..hi] {
                let mut e = 0.0;
                for k in 0..d {
                    let u = (z[k] - p[k]) / bw[k];
                    e += u * u;
                }
                if e < 81.0 {
                    acc += w * (-0.5 * e).exp();
                }
            }
            acc * norm
        })
        .collect();
    DensityGrid::from_spec(grid, values)?.normalized()
}
