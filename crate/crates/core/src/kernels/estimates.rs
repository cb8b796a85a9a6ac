//! Sampled checks of the space-time inequality and of the Gaussian
//! derivative estimates in dimension one.

use serde::Serialize;

/// Per-time sups of a sampled Gaussian ratio and their stability across decades.
#[derive(Debug, Clone, Serialize)]
pub struct SupReport {
    /// `(t, sup over sampled x)` for every requested time.
    pub per_time: Vec<(f64, f64)>,
    /// Largest sup over all sampled times.
    pub constant: f64,
    /// Ratio of the largest to the smallest per-decade sup.
    pub decade_ratio: f64,
}

fn g1(var: f64, x: f64) -> f64 {
    (-(x * x) / (2.0 * var)).exp() / (std::f64::consts::TAU * var).sqrt()
}

fn sup_report(ts: &[f64], x_max: f64, samples: usize, f: impl Fn(f64, f64) -> f64) -> SupReport {
    let n = samples.max(2);
    let per_time: Vec<(f64, f64)> = ts
        .iter()
        .map(|&t| {
            let sup = (0..n)
                .map(|i| -x_max + 2.0 * x_max * i as f64 / (n - 1) as f64)
                .map(|x| f(t, x))
                .filter(|v| v.is_finite())
                .fold(0.0f64, f64::max);
            (t, sup)
        })
        .collect();
    let constant = per_time.iter().map(|p| p.1).fold(0.0, f64::max);
    let mut decades: std::collections::BTreeMap<i64, f64> = Default::default();
    for (t, s) in &per_time {
        let key = t.log10().floor() as i64;
        let e = decades.entry(key).or_insert(0.0);
        *e = e.max(*s);
    }
    let hi = decades.values().copied().fold(0.0, f64::max);
    let lo = decades.values().copied().fold(f64::INFINITY, f64::min);
    let decade_ratio = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    SupReport {
        per_time,
        constant,
        decade_ratio,
    }
}

/// Sup over `|x| ≤ x_max` of `|x|^p g(ct, x) / (t^{p/2} g(2ct, x))` for each `t`.
pub fn space_time_inequality(p: f64, c: f64, ts: &[f64], x_max: f64, samples: usize) -> SupReport {
    sup_report(ts, x_max, samples, |t, x| {
        x.abs().powf(p) * g1(c * t, x) / (t.powf(0.5 * p) * g1(2.0 * c * t, x))
    })
}

/// Sup of `t^{n/2} |H_n(ct, x)| g(ct, x) / g(2ct, x)` for `n ∈ {1, 2}`.
pub fn hermite_gaussian_estimate(n: u32, c: f64, ts: &[f64], x_max: f64, samples: usize) -> SupReport {
    sup_report(ts, x_max, samples, |t, x| {
        let v = c * t;
        let h = match n {
            1 => -x / v,
            _ => x * x / (v * v) - 1.0 / v,
        };
        t.powf(0.5 * n as f64) * h.abs() * g1(v, x) / g1(2.0 * v, x)
    })
}

/// Logarithmically spaced times, `per_decade` points in each decade from `t_lo`.
pub fn log_times(t_lo: f64, decades: usize, per_decade: usize) -> Vec<f64> {
    let n = decades * per_decade;
    (0..n)
        .map(|i| t_lo * 10f64.powf(i as f64 / per_decade as f64))
        .collect()
}
