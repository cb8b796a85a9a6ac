//! Probability measures as particle clouds or density grids, and the
//! distances between them.

mod empirical;
mod flow;
mod grid;
pub mod io;
mod kde;
mod transport;

use std::borrow::Cow;

pub use empirical::EmpiricalMeasure;
pub use flow::{MeasureFlow, TimeGrid};
pub use grid::{l1_density_distance, DensityGrid, GridSpec};
pub use kde::{default_grid, kde, silverman_bandwidth, Bandwidth};
pub use transport::{d_eta, wasserstein2, wasserstein2_with_method, TransportMethod, EXACT_LP_BUDGET};

use crate::error::{Error, Result};
use crate::numeric::exact_sum;

/// A probability measure in the representation used by the coefficient
/// models: either a particle cloud or a normalized density grid.
#[derive(Debug, Clone, PartialEq)]
pub enum Measure {
    Empirical(EmpiricalMeasure<f64>),
    Grid(DensityGrid<f64>),
}

impl From<EmpiricalMeasure<f64>> for Measure {
    fn from(m: EmpiricalMeasure<f64>) -> Self {
        Measure::Empirical(m)
    }
}

impl From<DensityGrid<f64>> for Measure {
    fn from(g: DensityGrid<f64>) -> Self {
        Measure::Grid(g)
    }
}

impl Measure {
    pub fn dirac(point: &[f64]) -> Result<Self> {
        Ok(Measure::Empirical(EmpiricalMeasure::dirac(point)?))
    }

    pub fn dim(&self) -> usize {
        match self {
            Measure::Empirical(m) => m.dim(),
            Measure::Grid(g) => g.dim(),
        }
    }

    pub fn is_grid(&self) -> bool {
        matches!(self, Measure::Grid(_))
    }

    /// Visits every atom or grid node with its quadrature weight.
    pub fn for_each(&self, mut f: impl FnMut(&[f64], f64)) {
        match self {
            Measure::Empirical(m) => m.iter().for_each(|(p, w)| f(p, w)),
            Measure::Grid(g) => {
                let d = g.dim();
                if d == 1 {
                    let (o, h, n) = (g.origin()[0], g.spacing()[0], g.len());
                    for (i, v) in g.values().iter().enumerate() {
                        if *v != 0.0 {
                            let w = if i == 0 || i + 1 == n { 0.5 * h } else { h };
                            f(&[o + h * i as f64], w * v);
                        }
                    }
                } else {
                    for (i, v) in g.values().iter().enumerate() {
                        if *v != 0.0 {
                            f(&g.node(i), g.weight(i) * v);
                        }
                    }
                }
            }
        }
    }

    /// `∫ f dμ`: a correctly rounded weighted sum for particle clouds and the
    /// trapezoid rule for grids.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        match self {
            Measure::Empirical(m) => m.integrate(f),
            Measure::Grid(_) => {
                let mut acc = 0.0;
                self.for_each(|p, w| acc += w * f(p));
                acc
            }
        }
    }

    /// Componentwise `∫ f dμ` for a vector-valued integrand writing into its
    /// second argument.
    pub fn integrate_vec(&self, out_dim: usize, f: impl Fn(&[f64], &mut [f64])) -> Vec<f64> {
        let mut buf = vec![0.0; out_dim];
        match self {
            Measure::Empirical(m) => {
                let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(m.len()); out_dim];
                for (p, w) in m.iter() {
                    f(p, &mut buf);
                    for k in 0..out_dim {
                        cols[k].push(w * buf[k]);
                    }
                }
                cols.into_iter().map(exact_sum).collect()
            }
            Measure::Grid(_) => {
                let mut acc = vec![0.0; out_dim];
                self.for_each(|p, w| {
                    f(p, &mut buf);
                    for k in 0..out_dim {
                        acc[k] += w * buf[k];
                    }
                });
                acc
            }
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            Measure::Empirical(m) => m.mean(),
            Measure::Grid(g) => g.mean(),
        }
    }

    pub fn moment2(&self) -> f64 {
        match self {
            Measure::Empirical(m) => m.moment2(),
            Measure::Grid(g) => g.moment2(),
        }
    }

    pub fn variance(&self) -> Vec<f64> {
        match self {
            Measure::Empirical(m) => m.variance(),
            Measure::Grid(g) => g.variance(),
        }
    }

    /// Particle representation: atoms as they are, or grid nodes carrying
    /// their normalized trapezoid masses.
    pub fn to_empirical(&self) -> Result<Cow<'_, EmpiricalMeasure<f64>>> {
        match self {
            Measure::Empirical(m) => Ok(Cow::Borrowed(m)),
            Measure::Grid(g) => {
                let mut points = Vec::new();
                let mut weights = Vec::new();
                self.for_each(|p, w| {
                    if w > 0.0 {
                        points.extend_from_slice(p);
                        weights.push(w);
                    }
                });
                let total = exact_sum(weights.iter().copied());
                if !(total > 0.0) {
                    return Err(Error::Domain("grid measure has zero mass".into()));
                }
                weights.iter_mut().for_each(|w| *w /= total);
                Ok(Cow::Owned(EmpiricalMeasure::new(g.dim(), points, weights)?))
            }
        }
    }

    /// `(1 - θ) self + θ other`; grids must share geometry and particle clouds
    /// are merged into a single weighted cloud.
    pub fn interpolate(&self, other: &Measure, theta: f64) -> Result<Measure> {
        if theta == 0.0 {
            return Ok(self.clone());
        }
        if theta == 1.0 {
            return Ok(other.clone());
        }
        match (self, other) {
            (Measure::Grid(a), Measure::Grid(b)) => Ok(Measure::Grid(a.blend(b, theta)?)),
            (Measure::Empirical(a), Measure::Empirical(b)) => {
                if a.dim() != b.dim() {
                    return Err(Error::Usage("cannot mix measures of different dimension".into()));
                }
                let mut points = a.points().to_vec();
                points.extend_from_slice(b.points());
                let mut weights: Vec<f64> = a.weights().iter().map(|w| w * (1.0 - theta)).collect();
                weights.extend(b.weights().iter().map(|w| w * theta));
                Ok(Measure::Empirical(EmpiricalMeasure::new(a.dim(), points, weights)?))
            }
            _ => Err(Error::Usage("cannot interpolate between a grid and a particle cloud".into())),
        }
    }

    /// Projects the measure onto a one-dimensional grid by linear (cloud-in-cell)
    /// deposition, or with a Gaussian kernel when `bandwidth` is given. The
    /// result has unit trapezoid mass.
    pub fn project(&self, spec: &GridSpec<f64>, bandwidth: Option<f64>) -> Result<DensityGrid<f64>> {
        if spec.dim() != 1 || self.dim() != 1 {
            return Err(Error::Usage("projection onto grids is implemented in dimension one".into()));
        }
        if let (Measure::Grid(g), None) = (self, bandwidth) {
            if g.spec() == *spec {
                return g.normalized();
            }
        }
        let n = spec.cells[0] + 1;
        let h = spec.spacing()[0];
        let lo = spec.lo[0];
        let mut cells = vec![0.0; n];
        match bandwidth {
            Some(bw) if bw > 0.0 => {
                let norm = 1.0 / (bw * std::f64::consts::TAU.sqrt());
                let reach = (9.0 * bw / h).ceil() as isize;
                let mut atoms: Vec<(f64, f64)> = Vec::new();
                self.for_each(|p, w| atoms.push((p[0], w)));
                atoms.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
                for (x, w) in atoms {
                    let c = ((x - lo) / h).round() as isize;
                    for j in (c - reach).max(0)..=(c + reach).min(n as isize - 1) {
                        let u = (lo + h * j as f64 - x) / bw;
                        cells[j as usize] += w * norm * (-0.5 * u * u).exp();
                    }
                }
            }
            Some(_) => return Err(Error::Domain("deposit bandwidth must be positive".into())),
            None => {
                let mut atoms: Vec<(f64, f64)> = Vec::new();
                self.for_each(|p, w| atoms.push((p[0], w)));
                atoms.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
                for (x, w) in atoms {
                    let u = ((x - lo) / h).clamp(0.0, (n - 1) as f64);
                    let i = (u.floor() as usize).min(n - 2);
                    let f = u - i as f64;
                    // Node masses are converted to densities with the trapezoid weights.
                    let wi = if i == 0 { 0.5 * h } else { h };
                    let wj = if i + 1 == n - 1 { 0.5 * h } else { h };
                    cells[i] += w * (1.0 - f) / wi;
                    cells[i + 1] += w * f / wj;
                }
            }
        }
        DensityGrid::from_spec(spec, cells)?.normalized()
    }
}
