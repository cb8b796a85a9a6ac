use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measures::{DensityGrid, GridSpec, Measure};
use crate::numeric::normal_cdf;
use crate::parametrix::{trapezoid, ParametrixConfig, Provenance, ProxySpec, TransitionDensity};
use crate::quadrature::LegendreRule;

/// Gaussian smoothing bands are cut at this many standard deviations.
const BAND: f64 = 8.5;

/// Coefficients `b(τ_m, z_j)` and `a(τ_m, z_j)` on a uniform time grid over
/// `[s, t]`, linear in time between nodes, with the cumulative integral of
/// `a` (exact for the piecewise-linear interpolant).
struct Tables {
    z: Vec<f64>,
    h: f64,
    times: Vec<f64>,
    b: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    cum: Vec<Vec<f64>>,
    b_zero: Vec<bool>,
    a_flat: Vec<bool>,
    a_max: f64,
}

impl Tables {
    fn build(spec: &ProxySpec, t: f64, grid: &GridSpec<f64>, steps: usize) -> Result<Self> {
        let s = spec.start();
        let z = grid.axis(0);
        let h = grid.spacing()[0];
        let times: Vec<f64> = (0..=steps)
            .map(|m| if m == steps { t } else { s + (t - s) * m as f64 / steps as f64 })
            .collect();
        let rows: Vec<(Vec<f64>, Vec<f64>)> = times
            .par_iter()
            .map(|&tau| -> Result<(Vec<f64>, Vec<f64>)> {
                let law = spec.flow().law_at(tau)?;
                let frozen = spec.model().freeze(tau, &law)?;
                let mut b = vec![0.0; z.len()];
                let mut a = vec![0.0; z.len()];
                let (mut bo, mut ao) = ([0.0], [0.0]);
                for (j, zj) in z.iter().enumerate() {
                    frozen.drift_into(&[*zj], &mut bo);
                    frozen.diffusion_into(&[*zj], &mut ao);
                    b[j] = bo[0];
                    a[j] = ao[0];
                }
                Ok((b, a))
            })
            .collect::<Result<_>>()?;
        let (b, a): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        for (m, row) in a.iter().enumerate() {
            if let Some(j) = row.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::Domain(format!(
                    "diffusion {} at t = {}, z = {} is not positive",
                    row[j], times[m], z[j]
                )));
            }
        }
        let mut cum = vec![vec![0.0; z.len()]];
        for m in 1..times.len() {
            let dt = times[m] - times[m - 1];
            let next: Vec<f64> = (0..z.len()).map(|j| cum[m - 1][j] + 0.5 * dt * (a[m - 1][j] + a[m][j])).collect();
            cum.push(next);
        }
        let b_zero = b.iter().map(|r| r.iter().all(|v| *v == 0.0)).collect();
        let a_flat = a.iter().map(|r| r.iter().all(|v| *v == r[0])).collect();
        let a_max = a.iter().flatten().fold(0.0f64, |m, v| m.max(*v));
        Ok(Self { z, h, times, b, a, cum, b_zero, a_flat, a_max })
    }

    fn locate(&self, v: f64) -> (usize, f64) {
        let m = self.times.len() - 1;
        let s = self.times[0];
        let t = self.times[m];
        let u = ((v - s) / (t - s) * m as f64).clamp(0.0, m as f64);
        let k = (u.floor() as usize).min(m - 1);
        (k, v - self.times[k])
    }

    /// Drift and diffusion at time `v`, plus flags for `b ≡ 0` and `a`
    /// constant in space on the surrounding interval.
    fn coefficients(&self, v: f64) -> (Vec<f64>, Vec<f64>, bool, bool) {
        let (k, dv) = self.locate(v);
        let th = dv / (self.times[k + 1] - self.times[k]);
        let lerp = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p + th * (q - p)).collect() };
        (
            lerp(&self.b[k], &self.b[k + 1]),
            lerp(&self.a[k], &self.a[k + 1]),
            self.b_zero[k] && self.b_zero[k + 1],
            self.a_flat[k] && self.a_flat[k + 1],
        )
    }

    /// `∫_s^v a(r, z_j) dr` for every node.
    fn cumulative(&self, v: f64) -> Vec<f64> {
        let (k, dv) = self.locate(v);
        let span = self.times[k + 1] - self.times[k];
        (0..self.z.len())
            .map(|j| {
                let a0 = self.a[k][j];
                let slope = (self.a[k + 1][j] - a0) / span;
                self.cum[k][j] + dv * a0 + 0.5 * dv * dv * slope
            })
            .collect()
    }
}

/// Weighted start points of the series.
struct Start {
    atoms: Vec<(f64, f64)>,
}

struct Engine<'a> {
    tables: &'a Tables,
    start: &'a Start,
    s: f64,
    rule: LegendreRule,
}

impl Engine<'_> {
    /// `p̂(s, v, x, z_j) = g(∫_s^v a(r, z_j) dr, z_j - x)`, averaged over the
    /// cell when the standard deviation is below two grid spacings.
    fn term0(&self, v: f64) -> Result<Vec<f64>> {
        let t = self.tables;
        let cum = t.cumulative(v);
        let mut out = vec![0.0; t.z.len()];
        for (j, zj) in t.z.iter().enumerate() {
            let var = cum[j];
            if !(var > 0.0) {
                return Err(Error::Domain(format!("accumulated variance {var} at z = {zj} is not positive")));
            }
            let sd = var.sqrt();
            let mut acc = 0.0;
            for &(x, w) in &self.start.atoms {
                let u = zj - x;
                acc += w * if sd < 2.0 * t.h {
                    (normal_cdf((u + 0.5 * t.h) / sd) - normal_cdf((u - 0.5 * t.h) / sd)) / t.h
                } else {
                    (-0.5 * u * u / var).exp() / (std::f64::consts::TAU * var).sqrt()
                };
            }
            out[j] = acc;
        }
        Ok(out)
    }

    /// `y ↦ ∫ F(z) ℋ(v, t, z, y) dz` on the grid, after integrating by parts in
    /// `z` so that only the Gaussian factor of `ℋ` is sampled:
    ///
    /// `∫ [-∂_z(F b) + ½ ∂²_z(F a) - ½ a(v, y) ∂²_z F](z) g(Σ_y, y - z) dz`,
    /// `Σ_y = ∫_v^t a(r, y) dr`.
    fn convolve(&self, f: &[f64], v: f64, cum_t: &[f64]) -> Vec<f64> {
        let t = self.tables;
        let n = f.len();
        let h = t.h;
        let (b, a, b_zero, a_flat) = t.coefficients(v);
        if b_zero && a_flat {
            return vec![0.0; n];
        }
        let mut first = vec![0.0; n];
        if !b_zero {
            let fb: Vec<f64> = f.iter().zip(&b).map(|(p, q)| p * q).collect();
            for j in 1..n - 1 {
                first[j] = -(fb[j + 1] - fb[j - 1]) / (2.0 * h);
            }
        }
        let mut second: Option<Vec<f64>> = None;
        if !a_flat {
            let fa: Vec<f64> = f.iter().zip(&a).map(|(p, q)| p * q).collect();
            let mut d2f = vec![0.0; n];
            for j in 1..n - 1 {
                first[j] += 0.5 * (fa[j + 1] - 2.0 * fa[j] + fa[j - 1]) / (h * h);
                d2f[j] = -0.5 * (f[j + 1] - 2.0 * f[j] + f[j - 1]) / (h * h);
            }
            second = Some(d2f);
        }
        let cum_v = t.cumulative(v);
        let mut out = vec![0.0; n];
        for j in 0..n {
            let var = (cum_t[j] - cum_v[j]).max(f64::MIN_POSITIVE);
            let reach = ((BAND * var.sqrt() / h).ceil() as usize).max(1);
            let c = h * h / (2.0 * var);
            let step = (-2.0 * c).exp();
            let mut ratio = (-c).exp();
            let mut e = 1.0;
            let mut norm = 1.0;
            let mut acc_first = first[j];
            let mut acc_second = second.as_ref().map_or(0.0, |s| s[j]);
            for m in 1..=reach {
                e *= ratio;
                ratio *= step;
                if e == 0.0 {
                    break;
                }
                norm += 2.0 * e;
                if m <= j {
                    acc_first += e * first[j - m];
                    if let Some(s) = &second {
                        acc_second += e * s[j - m];
                    }
                }
                if j + m < n {
                    acc_first += e * first[j + m];
                    if let Some(s) = &second {
                        acc_second += e * s[j + m];
                    }
                }
            }
            out[j] = (acc_first + a[j] * acc_second) / norm;
        }
        out
    }

    /// All orders `k = 0..=order` of the series at time `t`.
    fn terms(&self, order: usize, t: f64, parallel: bool) -> Result<Vec<Vec<f64>>> {
        let head = self.term0(t)?;
        if order == 0 {
            return Ok(vec![head]);
        }
        let cum_t = self.tables.cumulative(t);
        let nodes = self.rule.upper_power(self.s, t, 2);
        let node_terms = |&(v, w): &(f64, f64)| -> Result<Vec<Vec<f64>>> {
            let lower = self.terms(order - 1, v, false)?;
            Ok(lower
                .iter()
                .map(|f| {
                    let mut c = self.convolve(f, v, &cum_t);
                    c.iter_mut().for_each(|x| *x *= w);
                    c
                })
                .collect())
        };
        let per_node: Vec<Vec<Vec<f64>>> = if parallel {
            nodes.par_iter().map(node_terms).collect::<Result<_>>()?
        } else {
            nodes.iter().map(node_terms).collect::<Result<_>>()?
        };
        let n = head.len();
        let mut out = vec![head];
        for k in 1..=order {
            let mut acc = vec![0.0; n];
            for node in &per_node {
                for (a, v) in acc.iter_mut().zip(&node[k - 1]) {
                    *a += v;
                }
            }
            out.push(acc);
        }
        Ok(out)
    }
}

fn check_dim(spec: &ProxySpec) -> Result<()> {
    if spec.model().dim_x() != 1 {
        return Err(Error::Usage(format!(
            "the parametrix series is implemented in dimension one, model has dimension {}",
            spec.model().dim_x()
        )));
    }
    Ok(())
}

/// Half-width of the automatic window: `width·√(a_max τ) + τ·(outward drift)`,
/// with the coefficients sampled over a first-guess window around `[lo, hi]`.
fn auto_grid(spec: &ProxySpec, t: f64, lo: f64, hi: f64, cfg: &ParametrixConfig) -> Result<GridSpec<f64>> {
    let s = spec.start();
    let tau = t - s;
    let probe_times: Vec<f64> = (0..=8).map(|m| s + tau * m as f64 / 8.0).collect();
    let mut a_start = 0.0f64;
    for &r in &probe_times {
        let law = spec.flow().law_at(r)?;
        let fr = spec.model().freeze(r, &law)?;
        for x in [lo, hi] {
            let mut a = [0.0];
            fr.diffusion_into(&[x], &mut a);
            a_start = a_start.max(a[0]);
        }
    }
    let w0 = cfg.width_factor * (a_start * tau).sqrt() * 1.5;
    let mut a_max = a_start;
    let mut out_drift = 0.0f64;
    for &r in &probe_times {
        let law = spec.flow().law_at(r)?;
        let fr = spec.model().freeze(r, &law)?;
        for i in 0..=128 {
            let u = i as f64 / 128.0;
            let z = lo - w0 + (hi - lo + 2.0 * w0) * u;
            let (mut a, mut b) = ([0.0], [0.0]);
            fr.diffusion_into(&[z], &mut a);
            fr.drift_into(&[z], &mut b);
            a_max = a_max.max(a[0]);
            if z > hi {
                out_drift = out_drift.max(b[0]);
            }
            if z < lo {
                out_drift = out_drift.max(-b[0]);
            }
        }
    }
    if !(a_max > 0.0) || !a_max.is_finite() {
        return Err(Error::Domain("diffusion is not positive near the start point".into()));
    }
    let w = cfg.width_factor * (a_max * tau).sqrt() + tau * out_drift;
    GridSpec::line(lo - w, hi + w, cfg.cells)
}

fn run(spec: &ProxySpec, t: f64, cfg: &ParametrixConfig, start: Start, x: Option<Vec<f64>>) -> Result<TransitionDensity> {
    cfg.validate()?;
    check_dim(spec)?;
    let s = spec.start();
    if !(t > s) {
        return Err(Error::Usage(format!("need t > s, got s = {s}, t = {t}")));
    }
    if !spec.flow().covers(s, t) {
        return Err(Error::Usage(format!("flow does not cover [{s}, {t}]")));
    }
    let lo = start.atoms.iter().map(|a| a.0).fold(f64::INFINITY, f64::min);
    let hi = start.atoms.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max);
    let grid = match &cfg.space_grid {
        Some(g) => g.clone(),
        None => auto_grid(spec, t, lo, hi, cfg)?,
    };
    let n = grid.cells[0] + 1;
    let bytes = 8 * n * (3 * (cfg.coefficient_steps + 1) + (cfg.order + 1) * (cfg.order + 2) * cfg.time_nodes);
    if bytes > cfg.memory_budget_mb << 20 {
        return Err(Error::Resource(format!(
            "parametrix tables need {} MB, budget is {} MB",
            bytes >> 20,
            cfg.memory_budget_mb
        )));
    }
    let tables = Tables::build(spec, t, &grid, cfg.coefficient_steps)?;
    let engine = Engine {
        tables: &tables,
        start: &start,
        s,
        rule: LegendreRule::new(cfg.time_nodes)?,
    };
    let terms = engine.terms(cfg.order, t, true)?;
    let mut raw = vec![0.0; n];
    for term in &terms {
        for (r, v) in raw.iter_mut().zip(term) {
            *r += v;
        }
    }
    let h = tables.h;
    let raw_mass = trapezoid(&raw, h);
    let clipped: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
    let clipped_mass = trapezoid(&clipped, h);
    let values = if cfg.renormalize {
        if !(clipped_mass > 0.0) {
            return Err(Error::Numeric {
                step: 0,
                detail: "parametrix series has no positive mass on the grid".into(),
            });
        }
        clipped.iter().map(|v| v / clipped_mass).collect()
    } else {
        clipped
    };
    Ok(TransitionDensity {
        s,
        t,
        x,
        values: DensityGrid::from_spec(&grid, values)?,
        raw,
        terms,
        raw_mass,
        clipped_mass,
        renormalized: cfg.renormalize,
        diffusion_max: tables.a_max,
        provenance: Provenance {
            model: spec.model().name().to_string(),
            order: cfg.order,
            time_nodes: cfg.time_nodes,
            cells: grid.cells[0],
            coefficient_steps: cfg.coefficient_steps,
            flow_fingerprint: spec.flow().fingerprint(),
        },
    })
}

/// Truncated series `p_K(μ, s, t, x, ·) = Σ_{k≤K} (p̂ ⊗ ℋ^{(k)})(s, t, x, ·)`.
///
/// Each convolution uses `v = t - u²` in time, which cancels the
/// `(t - v)^{-1/2}` singularity of `ℋ`, and nests Gauss-Legendre rules
/// through the orders, so the cost grows like `time_nodes^K`.
pub fn density_series(spec: &ProxySpec, t: f64, x: &[f64], cfg: &ParametrixConfig) -> Result<TransitionDensity> {
    if x.len() != 1 {
        return Err(Error::Usage("start point must be one-dimensional".into()));
    }
    run(spec, t, cfg, Start { atoms: vec![(x[0], 1.0)] }, Some(x.to_vec()))
}

/// Series for the start law `μ`: by linearity of `⊗ ℋ` the proxy terms are
/// averaged over `μ` before convolving. Laws with more than
/// `cfg.law_nodes` atoms are binned linearly onto that many nodes.
pub fn law_series(spec: &ProxySpec, t: f64, cfg: &ParametrixConfig, mu: &Measure) -> Result<TransitionDensity> {
    if mu.dim() != 1 {
        return Err(Error::Usage("start law must be one-dimensional".into()));
    }
    let mut atoms = Vec::new();
    mu.for_each(|p, w| {
        if w > 0.0 {
            atoms.push((p[0], w));
        }
    });
    if atoms.is_empty() {
        return Err(Error::Usage("start law has no mass".into()));
    }
    if atoms.len() > cfg.law_nodes {
        atoms = bin_atoms(&atoms, cfg.law_nodes);
    }
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    atoms.iter_mut().for_each(|a| a.1 /= total);
    run(spec, t, cfg, Start { atoms }, None)
}

/// `p(μ, s, t, ·) = ∫ p(μ, s, t, x, ·) μ(dx)`.
pub fn density_of_law(spec: &ProxySpec, t: f64, cfg: &ParametrixConfig, mu: &Measure) -> Result<DensityGrid<f64>> {
    Ok(law_series(spec, t, cfg, mu)?.values)
}

fn bin_atoms(atoms: &[(f64, f64)], nodes: usize) -> Vec<(f64, f64)> {
    let lo = atoms.iter().map(|a| a.0).fold(f64::INFINITY, f64::min);
    let hi = atoms.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max);
    if nodes == 1 || hi <= lo {
        let mean = atoms.iter().map(|a| a.0 * a.1).sum::<f64>() / atoms.iter().map(|a| a.1).sum::<f64>();
        return vec![(mean, 1.0)];
    }
    let h = (hi - lo) / (nodes - 1) as f64;
    let mut w = vec![0.0; nodes];
    for &(x, m) in atoms {
        let u = (x - lo) / h;
        let i = (u.floor() as usize).min(nodes - 2);
        let f = u - i as f64;
        w[i] += m * (1.0 - f);
        w[i + 1] += m * f;
    }
    w.into_iter()
        .enumerate()
        .filter(|(_, m)| *m > 0.0)
        .map(|(i, m)| (lo + h * i as f64, m))
        .collect()
}
