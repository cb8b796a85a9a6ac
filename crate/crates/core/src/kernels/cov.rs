use crate::error::{Error, Result};
use crate::scalar::Real;

/// Symmetric positive-definite covariance matrix with a cached Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix<T: Real> {
    dim: usize,
    entries: Vec<T>,
    chol: Vec<T>,
    log_det: T,
}

impl<T: Real> CovMatrix<T> {
    /// Builds a covariance from row-major entries.
    ///
    /// Fails with [`Error::Domain`] if the matrix is not symmetric (relative
    /// tolerance 1e-12) or its Cholesky factorization fails.
    pub fn new(dim: usize, entries: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Usage("covariance dimension must be positive".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::Usage(format!(
                "covariance of dimension {dim} needs {} entries, got {}",
                dim * dim,
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("covariance has non-finite entries".into()));
        }
        let scale = entries.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let tol = T::invariant_tol() * scale.max(T::one());
        for i in 0..dim {
            for j in 0..i {
                if (entries[i * dim + j] - entries[j * dim + i]).abs() > tol {
                    return Err(Error::Domain(format!(
                        "covariance not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let chol = cholesky(dim, &entries)
            .ok_or_else(|| Error::Domain("covariance is not positive definite".into()))?;
        let two = T::lit(2.0);
        let log_det = (0..dim).fold(T::zero(), |acc, i| acc + two * chol[i * dim + i].ln());
        Ok(Self {
            dim,
            entries,
            chol,
            log_det,
        })
    }

    pub fn scalar(variance: T) -> Result<Self> {
        Self::new(1, vec![variance])
    }

    pub fn diagonal(diag: &[T]) -> Result<Self> {
        let d = diag.len();
        let mut e = vec![T::zero(); d * d];
        for (i, v) in diag.iter().enumerate() {
            e[i * d + i] = *v;
        }
        Self::new(d, e)
    }

    /// `scale * I_d`.
    pub fn isotropic(dim: usize, scale: T) -> Result<Self> {
        Self::diagonal(&vec![scale; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[i * self.dim + j]
    }

    pub fn log_det(&self) -> T {
        self.log_det
    }

    pub fn det(&self) -> T {
        self.log_det.exp()
    }

    /// Solves `Σ y = x`.
    pub fn solve(&self, x: &[T]) -> Vec<T> {
        let d = self.dim;
        assert_eq!(x.len(), d, "vector length must match covariance dimension");
        let l = &self.chol;
        let mut y = x.to_vec();
        for i in 0..d {
            let mut s = y[i];
            for k in 0..i {
                s = s - l[i * d + k] * y[k];
            }
            y[i] = s / l[i * d + i];
        }
        for i in (0..d).rev() {
            let mut s = y[i];
            for k in i + 1..d {
                s = s - l[k * d + i] * y[k];
            }
            y[i] = s / l[i * d + i];
        }
        y
    }

    /// Row-major `Σ^{-1}`.
    pub fn inverse(&self) -> Vec<T> {
        let d = self.dim;
        let mut inv = vec![T::zero(); d * d];
        let mut e = vec![T::zero(); d];
        for j in 0..d {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[j] = T::one();
            let col = self.solve(&e);
            for i in 0..d {
                inv[i * d + j] = col[i];
            }
        }
        inv
    }

    /// `<Σ^{-1} x, x>`.
    pub fn quad_form(&self, x: &[T]) -> T {
        let y = self.solve(x);
        y.iter().zip(x).fold(T::zero(), |acc, (a, b)| acc + *a * *b)
    }

    /// Returns `c Σ`.
    pub fn scaled(&self, c: T) -> Result<Self> {
        Self::new(self.dim, self.entries.iter().map(|v| *v * c).collect())
    }
}

fn cholesky<T: Real>(d: usize, a: &[T]) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s = s - l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(s > T::zero()) || !s.is_finite() {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_indefinite() {
        let r = CovMatrix::new(2, vec![1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_asymmetric() {
        let r = CovMatrix::<f64>::new(2, vec![2.0, 0.5, 0.4, 2.0]);
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn solve_and_inverse_agree() {
        let c = CovMatrix::<f64>::new(2, vec![2.0, 0.3, 0.3, 1.0]).unwrap();
        let inv = c.inverse();
        let y = c.solve(&[1.0, -1.0]);
        assert!((y[0] - (inv[0] - inv[1])).abs() < 1e-15);
        assert!((c.det() - (2.0 - 0.09)).abs() < 1e-14);
    }
}
