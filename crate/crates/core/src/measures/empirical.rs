use crate::error::{Error, Result};
use crate::numeric::exact_sum;
use crate::scalar::Real;

/// Weighted particle cloud in `R^d`.
///
/// Points are stored row-major (`N × d`). Reductions use correctly rounded
/// sums, so statistics do not depend on particle order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure<T: Real> {
    dim: usize,
    points: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> EmpiricalMeasure<T> {
    pub fn new(dim: usize, points: Vec<T>, weights: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Usage("measure dimension must be positive".into()));
        }
        if points.len() != dim * weights.len() {
            return Err(Error::Usage(format!(
                "{} coordinates do not match {} weights in dimension {dim}",
                points.len(),
                weights.len()
            )));
        }
        if weights.is_empty() {
            return Err(Error::Usage("empirical measure needs at least one atom".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain("empirical measure has non-finite points".into()));
        }
        if weights.iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
            return Err(Error::Domain("weights must be finite and nonnegative".into()));
        }
        let total = exact_sum(weights.iter().copied());
        let tol = T::invariant_tol() * T::lit(weights.len().max(1) as f64).sqrt().max(T::one());
        if (total - T::one()).abs() > tol {
            return Err(Error::Domain(format!("weights sum to {total}, not 1")));
        }
        Ok(Self {
            dim,
            points,
            weights,
        })
    }

    /// Equal weights `1/N` on the given points.
    pub fn uniform(dim: usize, points: Vec<T>) -> Result<Self> {
        if dim == 0 || points.len() % dim != 0 {
            return Err(Error::Usage("points length must be a multiple of the dimension".into()));
        }
        let n = points.len() / dim;
        if n == 0 {
            return Err(Error::Usage("empirical measure needs at least one atom".into()));
        }
        let w = T::one() / T::lit(n as f64);
        Self::new(dim, points, vec![w; n])
    }

    pub fn dirac(point: &[T]) -> Result<Self> {
        Self::new(point.len(), point.to_vec(), vec![T::one()])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> T {
        self.weights[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[T], T)> + '_ {
        self.points
            .chunks_exact(self.dim)
            .zip(self.weights.iter().copied())
    }

    /// True when all weights are equal to `1/N` within 1e-12.
    pub fn is_uniform(&self) -> bool {
        let w = T::one() / T::lit(self.len() as f64);
        self.weights
            .iter()
            .all(|v| (*v - w).abs() <= T::invariant_tol())
    }

    /// `∫ f dμ`.
    pub fn integrate(&self, f: impl Fn(&[T]) -> T) -> T {
        exact_sum(self.iter().map(|(p, w)| w * f(p)))
    }

    /// Componentwise mean.
    pub fn mean(&self) -> Vec<T> {
        (0..self.dim)
            .map(|k| exact_sum(self.iter().map(|(p, w)| w * p[k])))
            .collect()
    }

    /// `∫ |x|^2 dμ`.
    pub fn moment2(&self) -> T {
        self.integrate(|p| p.iter().fold(T::zero(), |a, v| a + *v * *v))
    }

    /// Componentwise variance.
    pub fn variance(&self) -> Vec<T> {
        let m = self.mean();
        (0..self.dim)
            .map(|k| exact_sum(self.iter().map(|(p, w)| w * (p[k] - m[k]) * (p[k] - m[k]))))
            .collect()
    }

    /// `(1 - ε) μ + ε δ_y`.
    pub fn mix_dirac(&self, eps: T, y: &[T]) -> Result<Self> {
        if y.len() != self.dim {
            return Err(Error::Usage("mixing point has the wrong dimension".into()));
        }
        let mut points = self.points.clone();
        points.extend_from_slice(y);
        let mut weights: Vec<T> = self.weights.iter().map(|w| *w * (T::one() - eps)).collect();
        weights.push(eps);
        Ok(Self {
            dim: self.dim,
            points,
            weights,
        })
    }

    /// Copy with atom `i` moved to `p`.
    pub fn with_point(&self, i: usize, p: &[T]) -> Self {
        let mut out = self.clone();
        out.points[i * self.dim..(i + 1) * self.dim].copy_from_slice(p);
        out
    }

    /// Copy with atoms reordered so that atom `k` of the result is atom `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut points = Vec::with_capacity(self.points.len());
        let mut weights = Vec::with_capacity(self.len());
        for &i in perm {
            points.extend_from_slice(self.point(i));
            weights.push(self.weights[i]);
        }
        Self {
            dim: self.dim,
            points,
            weights,
        }
    }

    /// Converts the scalar type.
    pub fn cast<U: Real>(&self) -> EmpiricalMeasure<U> {
        EmpiricalMeasure {
            dim: self.dim,
            points: self.points.iter().map(|v| U::lit(v.as_f64())).collect(),
            weights: self.weights.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_weights() {
        assert!(EmpiricalMeasure::new(1, vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(EmpiricalMeasure::new(1, vec![0.0, 1.0], vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn moments_of_symmetric_pair() {
        let m = EmpiricalMeasure::uniform(1, vec![-1.0, 1.0]).unwrap();
        assert_eq!(m.moment2(), 1.0);
        assert_eq!(m.mean(), vec![0.0]);
    }
}
