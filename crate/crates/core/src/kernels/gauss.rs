use crate::error::{Error, Result};
use crate::kernels::cov::CovMatrix;
use crate::scalar::Real;

/// Value of a centered Gaussian density.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct GaussEval<T: Real>(pub T);

impl<T: Real> GaussEval<T> {
    pub fn value(self) -> T {
        self.0
    }
}

fn check_dim<T: Real>(sigma: &CovMatrix<T>, x: &[T]) -> Result<()> {
    if x.len() != sigma.dim() {
        return Err(Error::Usage(format!(
            "point has dimension {} but covariance has dimension {}",
            x.len(),
            sigma.dim()
        )));
    }
    Ok(())
}

/// `g(Σ, x) = (2π)^{-d/2} det(Σ)^{-1/2} exp(-<Σ^{-1}x, x>/2)`.
pub fn gauss_eval<T: Real>(sigma: &CovMatrix<T>, x: &[T]) -> Result<GaussEval<T>> {
    check_dim(sigma, x)?;
    let d = T::lit(sigma.dim() as f64);
    let half = T::lit(0.5);
    let log_norm = -half * (d * T::TAU().ln() + sigma.log_det());
    Ok(GaussEval((log_norm - half * sigma.quad_form(x)).exp()))
}

/// First Hermite factor `H_1(Σ, x) = -Σ^{-1} x`, so that `∇_x g = H_1 g`.
pub fn hermite1<T: Real>(sigma: &CovMatrix<T>, x: &[T]) -> Result<Vec<T>> {
    check_dim(sigma, x)?;
    Ok(sigma.solve(x).into_iter().map(|v| -v).collect())
}

/// Second Hermite factor `H_2(Σ, x) = (Σ^{-1}x)(Σ^{-1}x)^T - Σ^{-1}`, row-major,
/// so that `∇_x^2 g = H_2 g`.
pub fn hermite2<T: Real>(sigma: &CovMatrix<T>, x: &[T]) -> Result<Vec<T>> {
    check_dim(sigma, x)?;
    let d = sigma.dim();
    let y = sigma.solve(x);
    let inv = sigma.inverse();
    let mut out = vec![T::zero(); d * d];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = y[i] * y[j] - inv[i * d + j];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_at_origin() {
        let s = CovMatrix::scalar(1.0f64).unwrap();
        let v = gauss_eval(&s, &[0.0]).unwrap().value();
        assert!((v - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_usage_error() {
        let s = CovMatrix::isotropic(2, 1.0f64).unwrap();
        assert!(matches!(gauss_eval(&s, &[0.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn hermite2_matches_second_derivative_1d() {
        let s = CovMatrix::scalar(0.7f64).unwrap();
        let x = 0.4;
        let h = 1e-4;
        let g = |x: f64| gauss_eval(&s, &[x]).unwrap().value();
        let fd = (g(x + h) - 2.0 * g(x) + g(x - h)) / (h * h);
        let h2 = hermite2(&s, &[x]).unwrap()[0] * g(x);
        assert!((fd - h2).abs() < 1e-6);
    }
}
