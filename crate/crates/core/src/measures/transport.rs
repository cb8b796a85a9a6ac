use crate::error::{Error, Result};
use crate::measures::EmpiricalMeasure;
use crate::numeric::exact_sum;
use crate::scalar::Real;

/// Largest `N·M` solved by the exact transport linear program.
pub const EXACT_LP_BUDGET: usize = 10_000;

/// How a transport cost was computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransportMethod {
    /// Sorted quantile coupling (dimension one, exact).
    Quantile,
    /// Exact linear program (successive shortest paths).
    ExactLp,
    /// Log-domain Sinkhorn with regularization `epsilon`. The returned
    /// squared cost is that of the entropic plan, an upper bound on the
    /// optimal one exceeding it by at most about `epsilon · ln(N·M)`.
    Entropic { epsilon: f64 },
}

fn check_dims<T: Real>(mu: &EmpiricalMeasure<T>, nu: &EmpiricalMeasure<T>) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(Error::Usage(format!(
            "measures live in dimensions {} and {}",
            mu.dim(),
            nu.dim()
        )));
    }
    Ok(())
}

fn sq_dist<T: Real>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum()
}

/// 2-Wasserstein distance between two empirical measures.
pub fn wasserstein2<T: Real>(mu: &EmpiricalMeasure<T>, nu: &EmpiricalMeasure<T>) -> Result<T> {
    wasserstein2_with_method(mu, nu).map(|(v, _)| v)
}

/// [`wasserstein2`] together with the method that produced the value.
pub fn wasserstein2_with_method<T: Real>(
    mu: &EmpiricalMeasure<T>,
    nu: &EmpiricalMeasure<T>,
) -> Result<(T, TransportMethod)> {
    check_dims(mu, nu)?;
    if mu.dim() == 1 {
        return Ok((T::lit(quantile_cost(mu, nu).sqrt()), TransportMethod::Quantile));
    }
    let cost = |i: usize, j: usize| sq_dist(mu.point(i), nu.point(j));
    if mu.len() * nu.len() <= EXACT_LP_BUDGET {
        let c = exact_transport(mu.weights(), nu.weights(), cost);
        Ok((T::lit(c.max(0.0).sqrt()), TransportMethod::ExactLp))
    } else {
        let (c, epsilon) = sinkhorn(mu.weights(), nu.weights(), cost);
        Ok((T::lit(c.max(0.0).sqrt()), TransportMethod::Entropic { epsilon }))
    }
}

/// Optimal transport cost with ground cost `min(|x - y|^η, 1)`.
pub fn d_eta<T: Real>(mu: &EmpiricalMeasure<T>, nu: &EmpiricalMeasure<T>, eta: f64) -> Result<T> {
    check_dims(mu, nu)?;
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Domain(format!("eta must lie in (0, 1], got {eta}")));
    }
    if mu.len() * nu.len() > EXACT_LP_BUDGET {
        return Err(Error::Resource(format!(
            "d_eta needs N·M ≤ {EXACT_LP_BUDGET}, got {}",
            mu.len() * nu.len()
        )));
    }
    let cost = |i: usize, j: usize| sq_dist(mu.point(i), nu.point(j)).sqrt().powf(eta).min(1.0);
    Ok(T::lit(exact_transport(mu.weights(), nu.weights(), cost).max(0.0)))
}

fn sorted_atoms<T: Real>(m: &EmpiricalMeasure<T>) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = m
        .iter()
        .map(|(p, w)| (p[0].as_f64(), w.as_f64()))
        .filter(|(_, w)| *w > 0.0)
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    v
}

/// Squared cost of the monotone coupling, splitting weights where needed.
fn quantile_cost<T: Real>(mu: &EmpiricalMeasure<T>, nu: &EmpiricalMeasure<T>) -> f64 {
    let a = sorted_atoms(mu);
    let b = sorted_atoms(nu);
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut terms = Vec::with_capacity(a.len() + b.len());
    while i < a.len() && j < b.len() {
        let m = ra.min(rb);
        let d = a[i].0 - b[j].0;
        terms.push(m * d * d);
        if ra <= rb {
            rb -= ra;
            i += 1;
            if i < a.len() {
                ra = a[i].1;
            }
        } else {
            ra -= rb;
            j += 1;
            if j < b.len() {
                rb = b[j].1;
            }
        }
    }
    exact_sum(terms)
}

/// Minimum-cost transport between weight vectors `a` and `b` (both summing
/// to one) by successive shortest augmenting paths with node potentials.
fn exact_transport(a: &[impl Real], b: &[impl Real], cost: impl Fn(usize, usize) -> f64) -> f64 {
    let n = a.len();
    let m = b.len();
    let c: Vec<f64> = (0..n * m).map(|k| cost(k / m, k % m)).collect();
    let supply: Vec<f64> = a.iter().map(|w| w.as_f64()).collect();
    let demand: Vec<f64> = b.iter().map(|w| w.as_f64()).collect();
    let mut flow = vec![0.0f64; n * m];
    let mut out = vec![0.0f64; n];
    let mut inn = vec![0.0f64; m];
    // Node layout: 0 = source, 1..=n supply, n+1..=n+m demand, n+m+1 = sink.
    let nv = n + m + 2;
    let sink = nv - 1;
    let mut pot = vec![0.0f64; nv];
    let tiny = 1e-15;
    let total: f64 = supply.iter().sum::<f64>().min(demand.iter().sum());
    let mut sent = 0.0;
    let mut guard = 0usize;
    while sent < total - 1e-13 && guard < 4 * (n + m) * (n + m) + 16 {
        guard += 1;
        let mut dist = vec![f64::INFINITY; nv];
        let mut prev = vec![usize::MAX; nv];
        let mut done = vec![false; nv];
        dist[0] = 0.0;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..nv {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            let relax = |v: usize, w: f64, dist: &mut Vec<f64>, prev: &mut Vec<usize>| {
                let nd = dist[u] + (w + pot[u] - pot[v]).max(0.0);
                if nd < dist[v] {
                    dist[v] = nd;
                    prev[v] = u;
                }
            };
            if u == 0 {
                for i in 0..n {
                    if supply[i] - out[i] > tiny {
                        relax(1 + i, 0.0, &mut dist, &mut prev);
                    }
                }
            } else if u <= n {
                let i = u - 1;
                for j in 0..m {
                    relax(n + 1 + j, c[i * m + j], &mut dist, &mut prev);
                }
                if out[i] > tiny {
                    relax(0, 0.0, &mut dist, &mut prev);
                }
            } else if u < sink {
                let j = u - n - 1;
                for i in 0..n {
                    if flow[i * m + j] > tiny {
                        relax(1 + i, -c[i * m + j], &mut dist, &mut prev);
                    }
                }
                if demand[j] - inn[j] > tiny {
                    relax(sink, 0.0, &mut dist, &mut prev);
                }
            } else {
                for j in 0..m {
                    if inn[j] > tiny {
                        relax(n + 1 + j, 0.0, &mut dist, &mut prev);
                    }
                }
            }
        }
        if !dist[sink].is_finite() {
            break;
        }
        for v in 0..nv {
            if dist[v].is_finite() {
                pot[v] += dist[v];
            }
        }
        // Bottleneck along the path.
        let mut delta = f64::INFINITY;
        let mut v = sink;
        while v != 0 {
            let u = prev[v];
            let cap = if u == 0 {
                supply[v - 1] - out[v - 1]
            } else if v == sink {
                demand[u - n - 1] - inn[u - n - 1]
            } else if u <= n && v > n {
                f64::INFINITY
            } else {
                flow[(v - 1) * m + (u - n - 1)]
            };
            delta = delta.min(cap);
            v = u;
        }
        let mut v = sink;
        while v != 0 {
            let u = prev[v];
            if u == 0 {
                out[v - 1] += delta;
            } else if v == sink {
                inn[u - n - 1] += delta;
            } else if u <= n && v > n {
                flow[(u - 1) * m + (v - n - 1)] += delta;
            } else {
                flow[(v - 1) * m + (u - n - 1)] -= delta;
            }
            v = u;
        }
        sent += delta;
    }
    exact_sum((0..n * m).map(|k| flow[k] * c[k]))
}

/// Log-domain Sinkhorn; returns the cost of the entropic plan and epsilon.
fn sinkhorn(a: &[impl Real], b: &[impl Real], cost: impl Fn(usize, usize) -> f64) -> (f64, f64) {
    let n = a.len();
    let m = b.len();
    let c: Vec<f64> = (0..n * m).map(|k| cost(k / m, k % m)).collect();
    let cmax = c.iter().copied().fold(0.0, f64::max).max(1e-300);
    let eps = 1e-3 * cmax;
    let la: Vec<f64> = a.iter().map(|w| w.as_f64().max(1e-300).ln()).collect();
    let lb: Vec<f64> = b.iter().map(|w| w.as_f64().max(1e-300).ln()).collect();
    let mut f = vec![0.0f64; n];
    let mut g = vec![0.0f64; m];
    let lse = |vals: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = vals.collect();
        let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
    };
    for _ in 0..5000 {
        for i in 0..n {
            f[i] = eps * la[i] - eps * lse(&mut (0..m).map(|j| (g[j] - c[i * m + j]) / eps));
        }
        let mut err = 0.0f64;
        for j in 0..m {
            let ng = eps * lb[j] - eps * lse(&mut (0..n).map(|i| (f[i] - c[i * m + j]) / eps));
            err = err.max((ng - g[j]).abs());
            g[j] = ng;
        }
        if err < 1e-10 * cmax {
            break;
        }
    }
    let total = exact_sum((0..n * m).map(|k| {
        let (i, j) = (k / m, k % m);
        ((f[i] + g[j] - c[k]) / eps).exp() * c[k]
    }));
    (total, eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lp_matches_quantile_in_one_dimension() {
        let mu = EmpiricalMeasure::<f64>::new(1, vec![0.0, 1.0, 3.0], vec![0.2, 0.5, 0.3]).unwrap();
        let nu = EmpiricalMeasure::<f64>::new(1, vec![-1.0, 2.0], vec![0.6, 0.4]).unwrap();
        let q = quantile_cost(&mu, &nu);
        let lp = exact_transport(mu.weights(), nu.weights(), |i, j| {
            (mu.point(i)[0] - nu.point(j)[0]).powi(2)
        });
        assert!((q - lp).abs() < 1e-12, "{q} vs {lp}");
    }

    #[test]
    fn sinkhorn_close_to_exact() {
        let mu = EmpiricalMeasure::uniform(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let nu = EmpiricalMeasure::uniform(2, vec![0.5, 0.5, 2.0, 0.0, 0.0, 2.0]).unwrap();
        let cost = |i: usize, j: usize| sq_dist(mu.point(i), nu.point(j));
        let exact = exact_transport(mu.weights(), nu.weights(), cost);
        let (ent, eps) = sinkhorn(mu.weights(), nu.weights(), cost);
        assert!(ent >= exact - 1e-9);
        assert!(ent - exact <= eps * (9f64).ln() + 1e-9);
    }
}
