use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::mittag_leffler;
use crate::numeric::linear_fit;
use crate::parametrix::{density_series, ParametrixConfig, ProxySpec, TransitionDensity};

/// Sups are taken over `|z - x| ≤ radius·√(a_max (t - s))`, where the grid
/// values carry signal rather than round-off relative to the reference Gaussian.
pub const DEFAULT_RADIUS: f64 = 6.0;

const FD_REL_STEP: f64 = 0.05;

fn reference_gaussian(c: f64, tau: f64, u: f64) -> f64 {
    let var = c * tau;
    (-0.5 * u * u / var).exp() / (std::f64::consts::TAU * var).sqrt()
}

fn sup_ratio(values: &[f64], axis: &[f64], x: f64, tau: f64, c: f64, reach: f64) -> f64 {
    let mut sup = 0.0f64;
    for (v, z) in values.iter().zip(axis) {
        let u = z - x;
        if u.abs() <= reach {
            sup = sup.max(v.abs() / reference_gaussian(c, tau, u));
        }
    }
    sup
}

/// Largest ratio `max/min` of sups between times at most a decade apart.
fn decade_ratio(taus: &[f64], sups: &[f64]) -> f64 {
    let mut worst = 1.0f64;
    for i in 0..taus.len() {
        for j in 0..taus.len() {
            let (a, b) = (taus[i].min(taus[j]), taus[i].max(taus[j]));
            if i != j && b <= 10.0 * a * (1.0 + 1e-9) {
                let r = sups[i].max(sups[j]) / sups[i].min(sups[j]);
                worst = worst.max(if r.is_nan() { f64::INFINITY } else { r });
            }
        }
    }
    worst
}

/// Inputs of the Gaussian bound check beyond the densities themselves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundSettings {
    /// `|b|_∞` of the model on the region of interest.
    pub drift_sup: f64,
    /// Hölder exponent `η` of the coefficients.
    pub eta: f64,
    pub radius: f64,
}

impl BoundSettings {
    pub fn new(drift_sup: f64, eta: f64) -> Self {
        Self {
            drift_sup,
            eta,
            radius: DEFAULT_RADIUS,
        }
    }
}

/// Results for one reference constant `c`.
#[derive(Debug, Clone, Serialize)]
pub struct BoundRow {
    pub c: f64,
    /// `sup_z |p_K| / g(c(t - s), z - x)` per density.
    pub sups: Vec<f64>,
    pub decade_ratio: f64,
    /// Largest sup over the densities.
    pub bound_constant: f64,
    /// Smallest `Ĉ ≥ 0` with `E_{η/2,1}(Ĉ(|b|_∞ + 1)) ≥ bound_constant`.
    pub c_hat: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GaussianBoundReport {
    pub taus: Vec<f64>,
    pub rows: Vec<BoundRow>,
    /// Smallest `c` whose row passed.
    pub chosen_c: Option<f64>,
    pub passed: bool,
}

impl GaussianBoundReport {
    pub fn row(&self, c: f64) -> Option<&BoundRow> {
        self.rows.iter().find(|r| r.c == c)
    }
}

fn invert_mittag_leffler(alpha: f64, target: f64, scale: f64) -> Result<f64> {
    if target <= 1.0 {
        return Ok(0.0);
    }
    let f = |c: f64| mittag_leffler(alpha, 1.0, c * scale);
    let mut hi = 1.0;
    while f(hi)? < target {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Range("bound constant out of range".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(hi)
}

/// Sampled check of `|p_K(s, t, x, z)| ≤ C g(c(t - s), z - x)` with
/// `C = E_{η/2,1}(Ĉ(|b|_∞ + 1))`, over densities at several `t - s` spanning
/// at least one decade. A constant `c` passes when every sup is finite, `Ĉ`
/// exists and sups within a decade differ by at most a factor 2.
pub fn verify_gaussian_bound(
    densities: &[TransitionDensity],
    c_grid: &[f64],
    settings: BoundSettings,
) -> Result<GaussianBoundReport> {
    if densities.is_empty() || c_grid.is_empty() {
        return Err(Error::Usage("need at least one density and one value of c".into()));
    }
    if !(settings.eta > 0.0 && settings.eta <= 1.0) {
        return Err(Error::Domain(format!("eta must lie in (0, 1], got {}", settings.eta)));
    }
    let mut taus = Vec::new();
    for d in densities {
        if d.renormalized {
            return Err(Error::Usage("the bound is checked on raw (not renormalized) densities".into()));
        }
        if d.x.as_ref().map_or(true, |x| x.len() != 1) {
            return Err(Error::Usage("the bound needs densities started from a point".into()));
        }
        taus.push(d.t - d.s);
    }
    let mut rows = Vec::new();
    for &c in c_grid {
        if !(c > 0.0) {
            return Err(Error::Usage("values of c must be positive".into()));
        }
        let sups: Vec<f64> = densities
            .iter()
            .map(|d| {
                let tau = d.t - d.s;
                let x = d.x.as_ref().map(|x| x[0]).unwrap_or(0.0);
                let reach = settings.radius * (d.diffusion_max * tau).sqrt();
                sup_ratio(&d.raw, &d.axis(), x, tau, c, reach)
            })
            .collect();
        let bound_constant = sups.iter().fold(0.0f64, |m, v| m.max(*v));
        let ratio = decade_ratio(&taus, &sups);
        let c_hat = if bound_constant.is_finite() {
            invert_mittag_leffler(0.5 * settings.eta, bound_constant, settings.drift_sup + 1.0).unwrap_or(f64::INFINITY)
        } else {
            f64::INFINITY
        };
        let passed = sups.iter().all(|s| s.is_finite()) && c_hat.is_finite() && ratio <= 2.0;
        rows.push(BoundRow {
            c,
            sups,
            decade_ratio: ratio,
            bound_constant,
            c_hat,
            passed,
        });
    }
    let chosen_c = rows.iter().filter(|r| r.passed).map(|r| r.c).fold(None, |m: Option<f64>, c| {
        Some(m.map_or(c, |m| m.min(c)))
    });
    Ok(GaussianBoundReport {
        taus,
        passed: chosen_c.is_some(),
        chosen_c,
        rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub order: u32,
    pub taus: Vec<f64>,
    /// `sup_z |∂ⁿ_x p_K / g(c(t - s), z - x)|` per time.
    pub sups: Vec<f64>,
    pub slope: f64,
    /// `slope ≥ -n/2 - 0.15`.
    pub passed: bool,
    /// `|slope + n/2| ≤ 0.15`.
    pub within_band: bool,
}

/// Fits the slope of `log sup_z |∂ⁿ_x p_K / g(c(t - s), z - x)|` against
/// `log(t - s)`, with `∂ⁿ_x` taken by central differences of step
/// `0.05·√(t - s)` on a grid shared by the shifted start points.
pub fn verify_derivative_scaling(
    spec: &ProxySpec,
    cfg: &ParametrixConfig,
    order: u32,
    taus: &[f64],
    x: f64,
) -> Result<ScalingReport> {
    if order > 2 {
        return Err(Error::Usage(format!("derivative order {order} not supported (0, 1 or 2)")));
    }
    if taus.len() < 2 {
        return Err(Error::Usage("need at least two values of t - s".into()));
    }
    let raw = cfg.raw();
    let c = cfg.gauss_c;
    let s = spec.start();
    let mut sups = Vec::new();
    for &tau in taus {
        if !(tau > 0.0) {
            return Err(Error::Usage("values of t - s must be positive".into()));
        }
        let t = s + tau;
        let centre = density_series(spec, t, &[x], &raw)?;
        let shared = ParametrixConfig {
            space_grid: Some(centre.values.spec()),
            ..raw.clone()
        };
        let delta = FD_REL_STEP * tau.sqrt();
        let deriv: Vec<f64> = match order {
            0 => centre.raw.clone(),
            _ => {
                let plus = density_series(spec, t, &[x + delta], &shared)?;
                let minus = density_series(spec, t, &[x - delta], &shared)?;
                if order == 1 {
                    plus.raw.iter().zip(&minus.raw).map(|(p, m)| (p - m) / (2.0 * delta)).collect()
                } else {
                    (0..centre.raw.len())
                        .map(|j| (plus.raw[j] - 2.0 * centre.raw[j] + minus.raw[j]) / (delta * delta))
                        .collect()
                }
            }
        };
        let reach = DEFAULT_RADIUS * (centre.diffusion_max * tau).sqrt();
        sups.push(sup_ratio(&deriv, &centre.axis(), x, tau, c, reach));
    }
    let lx: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = sups.iter().map(|v| v.ln()).collect();
    let (slope, _) = linear_fit(&lx, &ly);
    let target = -0.5 * order as f64;
    Ok(ScalingReport {
        order,
        taus: taus.to_vec(),
        sups,
        slope,
        passed: slope >= target - 0.15,
        within_band: (slope - target).abs() <= 0.15,
    })
}
