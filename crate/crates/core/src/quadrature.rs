//! Gauss-Legendre rules and the endpoint substitutions used for singular
//! time integrals.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct LegendreRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl LegendreRule {
    pub fn new(n: usize) -> Result<Self> {
        let degree = NonZeroUsize::new(n)
            .ok_or_else(|| Error::Usage("Gauss-Legendre rule needs at least one node".into()))?;
        let rule = GaussLegendre::new(degree);
        let (nodes, weights) = rule.as_node_weight_pairs().iter().copied().unzip();
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped affinely onto `[a, b]`.
    pub fn on(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| (mid + half * x, half * w))
            .collect()
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.on(a, b).into_iter().map(|(x, w)| w * f(x)).sum()
    }

    /// Rule for `∫_a^b f(v) dv` after the change of variables `v = b - u^p`,
    /// which removes an endpoint singularity of order `(b - v)^{-1 + 1/p}`
    /// at `b`. Returned pairs are `(v, weight)` in the original variable.
    pub fn upper_power(&self, a: f64, b: f64, power: u32) -> Vec<(f64, f64)> {
        let p = power.max(1) as f64;
        let umax = (b - a).max(0.0).powf(1.0 / p);
        self.on(0.0, umax)
            .into_iter()
            .map(|(u, w)| (b - u.powf(p), w * p * u.powf(p - 1.0)))
            .collect()
    }

    /// Mirror image of [`LegendreRule::upper_power`] for a singularity at `a`.
    pub fn lower_power(&self, a: f64, b: f64, power: u32) -> Vec<(f64, f64)> {
        let p = power.max(1) as f64;
        let umax = (b - a).max(0.0).powf(1.0 / p);
        self.on(0.0, umax)
            .into_iter()
            .map(|(u, w)| (a + u.powf(p), w * p * u.powf(p - 1.0)))
            .collect()
    }

    /// Splits `[a, b]` at the midpoint and applies the power substitution
    /// towards each endpoint, for integrands singular at both ends.
    pub fn split_power(&self, a: f64, b: f64, power: u32) -> Vec<(f64, f64)> {
        let mid = 0.5 * (a + b);
        let mut out = self.lower_power(a, mid, power);
        out.extend(self.upper_power(mid, b, power));
        out
    }
}
