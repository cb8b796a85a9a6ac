use crate::coefficients::CoefficientModel;
use crate::error::{Error, Result};
use crate::measures::{GridSpec, MeasureFlow};

/// Step limit as a fraction of `h² / max a`.
pub const DIFFUSIVE_CFL: f64 = 0.4;
/// Step limit as a fraction of `h / max |b|`.
pub const ADVECTIVE_CFL: f64 = 0.5;

/// Coefficients frozen at the flow nodes: `a` on grid nodes, `b` on cell faces.
struct Tables {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

fn tabulate(model: &dyn CoefficientModel, q: &MeasureFlow, times: &[f64], z: &[f64], h: f64) -> Result<Tables> {
    let mut a_rows = Vec::with_capacity(times.len());
    let mut b_rows = Vec::with_capacity(times.len());
    for &t in times {
        let law = q.law_at(t)?;
        let fr = model.freeze(t, &law)?;
        let mut out = [0.0];
        let a: Vec<f64> = z
            .iter()
            .map(|x| {
                fr.diffusion_into(&[*x], &mut out);
                out[0]
            })
            .collect();
        let b: Vec<f64> = z[..z.len() - 1]
            .iter()
            .map(|x| {
                fr.drift_into(&[x + 0.5 * h], &mut out);
                out[0]
            })
            .collect();
        if let Some(j) = a.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!("diffusion {} at t = {t}, x = {} is invalid", a[j], z[j])));
        }
        if let Some(j) = b.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("drift is not finite at t = {t}, x = {}", z[j] + 0.5 * h)));
        }
        a_rows.push(a);
        b_rows.push(b);
    }
    Ok(Tables { a: a_rows, b: b_rows })
}

/// Largest stable step for the tabulated coefficients.
fn stable_step(t: &Tables, h: f64) -> f64 {
    let a_max = t.a.iter().flatten().fold(0.0f64, |m, v| m.max(*v));
    let b_max = t.b.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut dt = f64::INFINITY;
    if a_max > 0.0 {
        dt = dt.min(DIFFUSIVE_CFL * h * h / a_max);
    }
    if b_max > 0.0 {
        dt = dt.min(ADVECTIVE_CFL * h / b_max);
    }
    dt
}

/// Result of one Fokker-Planck solve: densities at the flow times.
pub(crate) struct FpSolution {
    pub states: Vec<Vec<f64>>,
    /// Trapezoid mass of the negative parts removed at the output nodes.
    pub clip_mass: f64,
}

/// Explicit conservative scheme for `∂_t p = -∂_x(b p) + ½ ∂²_x(a p)` with
/// zero-flux boundaries. The face flux is
/// `b_{j+½} p_face - ½ (a_{j+1} p_{j+1} - a_j p_j) / h`, with `p_face`
/// centered where the cell Péclet number `|b| h / a` is at most one and
/// upwinded elsewhere. Node `j` owns its trapezoid volume, so the
/// trapezoid mass is conserved exactly up to rounding.
pub(crate) fn solve(
    model: &dyn CoefficientModel,
    q: &MeasureFlow,
    times: &[f64],
    grid: &GridSpec<f64>,
    p0: Vec<f64>,
    requested_step: Option<f64>,
) -> Result<FpSolution> {
    let z = grid.axis(0);
    let n = z.len();
    let h = grid.spacing()[0];
    let tables = tabulate(model, q, times, &z, h)?;
    let limit = stable_step(&tables, h);
    let step = match requested_step {
        Some(dt) if dt > limit => {
            return Err(Error::Usage(format!(
                "Fokker-Planck step {dt:e} violates the stability limit; need Δt <= {limit:e}"
            )))
        }
        Some(dt) if !(dt > 0.0) => return Err(Error::Usage("Fokker-Planck step must be positive".into())),
        Some(dt) => dt,
        None => limit,
    };
    let vol: Vec<f64> = (0..n).map(|j| if j == 0 || j == n - 1 { 0.5 * h } else { h }).collect();
    let mut p = p0;
    let mut states = vec![p.clone()];
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n - 1];
    let mut flux = vec![0.0; n - 1];
    for k in 0..times.len() - 1 {
        let span = times[k + 1] - times[k];
        let sub = if step.is_finite() { (span / step).ceil().max(1.0) as usize } else { 1 };
        let dt = span / sub as f64;
        for m in 0..sub {
            let th = (m as f64 + 0.5) / sub as f64;
            for j in 0..n {
                a[j] = tables.a[k][j] + th * (tables.a[k + 1][j] - tables.a[k][j]);
            }
            for j in 0..n - 1 {
                b[j] = tables.b[k][j] + th * (tables.b[k + 1][j] - tables.b[k][j]);
            }
            for j in 0..n - 1 {
                let af = 0.5 * (a[j] + a[j + 1]);
                let face = if b[j].abs() * h <= af {
                    0.5 * (p[j] + p[j + 1])
                } else if b[j] > 0.0 {
                    p[j]
                } else {
                    p[j + 1]
                };
                flux[j] = b[j] * face - 0.5 * (a[j + 1] * p[j + 1] - a[j] * p[j]) / h;
            }
            for j in 0..n {
                let right = if j + 1 < n { flux[j] } else { 0.0 };
                let left = if j > 0 { flux[j - 1] } else { 0.0 };
                p[j] -= dt / vol[j] * (right - left);
            }
        }
        if let Some(j) = p.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                step: k + 1,
                detail: format!("Fokker-Planck density is not finite at x = {}", z[j]),
            });
        }
        states.push(p.clone());
    }
    let mut clip_mass = 0.0;
    for s in states.iter_mut() {
        for (j, v) in s.iter_mut().enumerate() {
            if *v < 0.0 {
                clip_mass += -*v * vol[j];
                *v = 0.0;
            }
        }
    }
    Ok(FpSolution { states, clip_mass })
}
