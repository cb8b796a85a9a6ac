use nalgebra::DMatrix;
use serde::Serialize;

use crate::coefficients::CoefficientModel;
use crate::error::{Error, Result};
use crate::measures::Measure;
use crate::numeric::linear_fit;

/// Pass/fail per assumption clause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ClauseChecks {
    /// `a` uniformly elliptic on the samples.
    pub ellipticity: bool,
    /// `x ↦ a` Hölder with a positive exponent.
    pub holder_a: bool,
    /// `y ↦ δa/δm` Hölder with a positive exponent (true when not supplied).
    pub holder_flat: bool,
    /// `μ ↦ b` Lipschitz for the total variation distance with a finite constant.
    pub tv_lipschitz: bool,
}

/// Sampled estimates of the regularity and ellipticity constants of a model.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub holder_eta_a: f64,
    /// `None` when the model supplies no flat derivative of `a`.
    pub holder_eta_flat: Option<f64>,
    pub tv_lipschitz_b: f64,
    pub passed: ClauseChecks,
}

const EPS_TV: f64 = 1e-3;

fn fro(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Estimated Hölder exponent from the largest increments over dyadic
/// separations `2^-k`, `k = 2..10`. Returns `(clamped exponent, raw slope)`.
fn holder_exponent(increment: impl Fn(f64) -> Result<f64>) -> Result<(f64, f64)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 2..=10 {
        let delta = 2f64.powi(-k);
        let inc = increment(delta)?;
        if inc > 1e-13 {
            xs.push(delta.ln());
            ys.push(inc.ln());
        }
    }
    if xs.len() < 2 {
        // No measurable increments: constant, hence Lipschitz.
        return Ok((1.0, 1.0));
    }
    let (slope, _) = linear_fit(&xs, &ys);
    Ok((slope.clamp(1e-3, 1.0), slope))
}

/// Estimates the ellipticity bounds of `a`, the Hölder exponents of `a` in `x`
/// and of `δa/δm` in `y`, and the total-variation Lipschitz constant of `b`.
///
/// `samples` are `(t, x)` pairs and `corpus` the measures to test against.
pub fn validate_assumptions(
    model: &dyn CoefficientModel,
    samples: &[(f64, Vec<f64>)],
    corpus: &[Measure],
) -> Result<AssumptionReport> {
    if samples.is_empty() {
        return Err(Error::Usage("assumption validation needs at least one (t, x) sample".into()));
    }
    if corpus.is_empty() {
        return Err(Error::Usage("assumption validation needs at least one measure".into()));
    }
    let d = model.dim_x();
    if samples.iter().any(|(_, x)| x.len() != d) {
        return Err(Error::Usage("sample points have the wrong dimension".into()));
    }

    let mut lambda_min = f64::INFINITY;
    let mut lambda_max = f64::NEG_INFINITY;
    for mu in corpus {
        for (t, x) in samples {
            let a = model.diffusion(*t, x, mu)?;
            let eig = a.symmetric_eigenvalues();
            lambda_min = lambda_min.min(eig.min());
            lambda_max = lambda_max.max(eig.max());
        }
    }

    let (eta_a, raw_a) = holder_exponent(|delta| {
        let mut worst = 0.0f64;
        for mu in corpus {
            let frozen_at = |t: f64| model.freeze(t, mu);
            for (t, x) in samples {
                let fr = frozen_at(*t)?;
                let a0 = fr.diffusion(x);
                for k in 0..d {
                    let mut xp = x.clone();
                    xp[k] += delta;
                    worst = worst.max(fro(&(fr.diffusion(&xp) - &a0)));
                }
            }
        }
        Ok(worst)
    })?;

    let has_flat = model.flat_diffusion(samples[0].0, &samples[0].1, &corpus[0], &samples[0].1)?.is_some();
    let flat = if has_flat {
        Some(holder_exponent(|delta| {
            let mut worst = 0.0f64;
            for mu in corpus {
                for (t, x) in samples {
                    let f0 = model.flat_diffusion(*t, x, mu, x)?.unwrap_or_else(|| DMatrix::zeros(d, d));
                    for k in 0..d {
                        let mut y = x.clone();
                        y[k] += delta;
                        let f1 = model.flat_diffusion(*t, x, mu, &y)?.unwrap_or_else(|| DMatrix::zeros(d, d));
                        worst = worst.max(fro(&(f1 - &f0)));
                    }
                }
            }
            Ok(worst)
        })?)
    } else {
        None
    };

    let mut tv = 0.0f64;
    if !model.measure_independent() {
        for mu in corpus {
            let cloud = mu.to_empirical()?;
            for (t, x) in samples {
                let b0 = model.drift(*t, x, mu)?;
                for (_, y) in samples {
                    let mixed = Measure::Empirical(cloud.mix_dirac(EPS_TV, y)?);
                    let b1 = model.drift(*t, x, &mixed)?;
                    let atom: f64 = cloud
                        .iter()
                        .filter(|(p, _)| *p == y.as_slice())
                        .map(|(_, w)| w)
                        .sum();
                    let dist = EPS_TV * 2.0 * (1.0 - atom);
                    if dist > 0.0 {
                        tv = tv.max((b1 - &b0).norm() / dist);
                    }
                }
            }
        }
    }

    let passed = ClauseChecks {
        ellipticity: lambda_min > 0.0 && lambda_max.is_finite(),
        holder_a: raw_a > 0.0,
        holder_flat: flat.map(|(_, raw)| raw > 0.0).unwrap_or(true),
        tv_lipschitz: tv.is_finite(),
    };
    Ok(AssumptionReport {
        lambda_min,
        lambda_max,
        holder_eta_a: eta_a,
        holder_eta_flat: flat.map(|(e, _)| e),
        tv_lipschitz_b: tv,
        passed,
    })
}
