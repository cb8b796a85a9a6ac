use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::exact_sum;
use crate::scalar::Real;

/// Axis-aligned uniform node grid: `cells[k] + 1` nodes from `lo[k]` to `hi[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<T: Real> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
    pub cells: Vec<usize>,
}

impl<T: Real> GridSpec<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>, cells: Vec<usize>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() || lo.len() != cells.len() {
            return Err(Error::Usage("grid bounds and cell counts must share a positive dimension".into()));
        }
        if lo.len() > 3 {
            return Err(Error::Usage("grids are limited to dimension 3".into()));
        }
        for k in 0..lo.len() {
            if !(hi[k] > lo[k]) || !lo[k].is_finite() || !hi[k].is_finite() {
                return Err(Error::Usage(format!("grid axis {k} has empty or non-finite extent")));
            }
            if cells[k] < 2 {
                return Err(Error::Usage(format!("grid axis {k} needs at least two cells")));
            }
        }
        Ok(Self { lo, hi, cells })
    }

    /// One-dimensional grid `[lo, hi]` with `cells` cells.
    pub fn line(lo: T, hi: T, cells: usize) -> Result<Self> {
        Self::new(vec![lo], vec![hi], vec![cells])
    }

    /// Symmetric one-dimensional grid centered at `c`.
    pub fn centered(c: T, half_width: T, cells: usize) -> Result<Self> {
        Self::line(c - half_width, c + half_width, cells)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn spacing(&self) -> Vec<T> {
        (0..self.dim())
            .map(|k| (self.hi[k] - self.lo[k]) / T::lit(self.cells[k] as f64))
            .collect()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.cells.iter().map(|c| c + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node coordinates along one axis.
    pub fn axis(&self, k: usize) -> Vec<T> {
        let h = self.spacing()[k];
        (0..=self.cells[k])
            .map(|i| self.lo[k] + h * T::lit(i as f64))
            .collect()
    }
}

/// Nonnegative nodal values on a uniform grid, row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid<T: Real> {
    origin: Vec<T>,
    spacing: Vec<T>,
    shape: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> DensityGrid<T> {
    pub fn new(origin: Vec<T>, spacing: Vec<T>, shape: Vec<usize>, values: Vec<T>) -> Result<Self> {
        let d = origin.len();
        if d == 0 || spacing.len() != d || shape.len() != d {
            return Err(Error::Usage("grid origin, spacing and shape must share a positive dimension".into()));
        }
        if spacing.iter().any(|h| !(*h > T::zero()) || !h.is_finite()) {
            return Err(Error::Usage("grid spacing must be positive".into()));
        }
        if shape.iter().any(|n| *n < 2) {
            return Err(Error::Usage("grid needs at least two nodes per axis".into()));
        }
        if values.len() != shape.iter().product::<usize>() {
            return Err(Error::Usage(format!(
                "grid of shape {shape:?} needs {} values, got {}",
                shape.iter().product::<usize>(),
                values.len()
            )));
        }
        if values.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return Err(Error::Domain("density values must be finite and nonnegative".into()));
        }
        Ok(Self {
            origin,
            spacing,
            shape,
            values,
        })
    }

    pub fn from_spec(spec: &GridSpec<T>, values: Vec<T>) -> Result<Self> {
        Self::new(spec.lo.clone(), spec.spacing(), spec.shape(), values)
    }

    /// Tabulates `f` at the grid nodes.
    pub fn from_fn(spec: &GridSpec<T>, f: impl Fn(&[T]) -> T) -> Result<Self> {
        let g = Self::new(spec.lo.clone(), spec.spacing(), spec.shape(), vec![T::zero(); spec.len()])?;
        let values = (0..g.len()).map(|i| f(&g.node(i))).collect();
        Self::from_spec(spec, values)
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn origin(&self) -> &[T] {
        &self.origin
    }

    pub fn spacing(&self) -> &[T] {
        &self.spacing
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spec(&self) -> GridSpec<T> {
        let hi = (0..self.dim())
            .map(|k| self.origin[k] + self.spacing[k] * T::lit((self.shape[k] - 1) as f64))
            .collect();
        GridSpec {
            lo: self.origin.clone(),
            hi,
            cells: self.shape.iter().map(|n| n - 1).collect(),
        }
    }

    /// Multi-index of flat node `i`.
    pub fn index(&self, mut i: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            idx[k] = i % self.shape[k];
            i /= self.shape[k];
        }
        idx
    }

    /// Coordinates of flat node `i`.
    pub fn node(&self, i: usize) -> Vec<T> {
        self.index(i)
            .into_iter()
            .enumerate()
            .map(|(k, j)| self.origin[k] + self.spacing[k] * T::lit(j as f64))
            .collect()
    }

    /// Trapezoid quadrature weight of flat node `i`.
    pub fn weight(&self, i: usize) -> T {
        let half = T::lit(0.5);
        self.index(i)
            .into_iter()
            .enumerate()
            .fold(T::one(), |acc, (k, j)| {
                let end = j == 0 || j + 1 == self.shape[k];
                acc * self.spacing[k] * if end { half } else { T::one() }
            })
    }

    pub fn same_geometry(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self
                .origin
                .iter()
                .zip(&other.origin)
                .chain(self.spacing.iter().zip(&other.spacing))
                .all(|(a, b)| (*a - *b).abs() <= T::invariant_tol() * (a.abs() + T::one()))
    }

    /// Trapezoid integral of `f(z) p(z)`.
    pub fn integrate(&self, f: impl Fn(&[T]) -> T) -> T {
        exact_sum((0..self.len()).map(|i| self.weight(i) * self.values[i] * f(&self.node(i))))
    }

    /// Trapezoid integral of the values.
    pub fn mass(&self) -> T {
        exact_sum((0..self.len()).map(|i| self.weight(i) * self.values[i]))
    }

    /// Rescales to unit trapezoid mass.
    pub fn normalized(&self) -> Result<Self> {
        let m = self.mass();
        if !(m > T::zero()) {
            return Err(Error::Domain("cannot normalize a grid with zero mass".into()));
        }
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = *v / m);
        Ok(out)
    }

    pub fn mean(&self) -> Vec<T> {
        let m = self.mass();
        (0..self.dim())
            .map(|k| self.integrate(|z| z[k]) / m)
            .collect()
    }

    pub fn moment2(&self) -> T {
        self.integrate(|z| z.iter().fold(T::zero(), |a, v| a + *v * *v))
    }

    pub fn variance(&self) -> Vec<T> {
        let m = self.mean();
        let mass = self.mass();
        (0..self.dim())
            .map(|k| self.integrate(|z| (z[k] - m[k]) * (z[k] - m[k])) / mass)
            .collect()
    }

    /// `(1 - θ) self + θ other` on a shared geometry.
    pub fn blend(&self, other: &Self, theta: T) -> Result<Self> {
        if !self.same_geometry(other) {
            return Err(Error::Usage("cannot blend grids with different geometry".into()));
        }
        let mut out = self.clone();
        for (v, w) in out.values.iter_mut().zip(&other.values) {
            *v = (T::one() - theta) * *v + theta * *w;
        }
        Ok(out)
    }

    /// Linear interpolation of the values at `x` (one-dimensional grids); zero outside.
    pub fn interpolate(&self, x: T) -> T {
        let n = self.shape[0];
        let u = (x - self.origin[0]) / self.spacing[0];
        if !(u >= T::zero()) || u > T::lit((n - 1) as f64) {
            return T::zero();
        }
        let i = u.floor().to_usize().unwrap_or(0).min(n - 2);
        let f = u - T::lit(i as f64);
        self.values[i] * (T::one() - f) + self.values[i + 1] * f
    }

    pub fn cast<U: Real>(&self) -> DensityGrid<U> {
        let c = |v: &Vec<T>| v.iter().map(|x| U::lit(x.as_f64())).collect();
        DensityGrid {
            origin: c(&self.origin),
            spacing: c(&self.spacing),
            shape: self.shape.clone(),
            values: c(&self.values),
        }
    }
}

/// `∫ |p - q|` by the trapezoid rule, without the total-variation factor 1/2.
pub fn l1_density_distance<T: Real>(p: &DensityGrid<T>, q: &DensityGrid<T>) -> Result<T> {
    if !p.same_geometry(q) {
        return Err(Error::Usage("l1 distance needs identical grids".into()));
    }
    Ok(exact_sum(
        (0..p.len()).map(|i| p.weight(i) * (p.values[i] - q.values[i]).abs()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_weights_sum_to_volume() {
        let spec = GridSpec::<f64>::new(vec![0.0, -1.0], vec![2.0, 1.0], vec![4, 8]).unwrap();
        let g = DensityGrid::from_fn(&spec, |_| 1.0).unwrap();
        assert!((g.mass() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_negative_values() {
        let spec = GridSpec::line(0.0, 1.0, 2).unwrap();
        assert!(DensityGrid::from_spec(&spec, vec![0.0, -1.0, 0.0]).is_err());
    }
}
