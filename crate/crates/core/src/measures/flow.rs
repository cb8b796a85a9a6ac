use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::measures::Measure;

/// Strictly increasing time nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid(Vec<f64>);

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Usage("time grid needs at least one node".into()));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Usage("time grid must be finite and strictly increasing".into()));
        }
        Ok(Self(times))
    }

    /// `steps + 1` equally spaced nodes from `s` to `t`.
    pub fn uniform(s: f64, t: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(t > s) {
            return Err(Error::Usage("uniform time grid needs t > s and at least one step".into()));
        }
        let h = (t - s) / steps as f64;
        let mut v: Vec<f64> = (0..=steps).map(|k| s + h * k as f64).collect();
        v[steps] = t;
        Self::new(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.0[0]
    }

    pub fn end(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    /// Index `k` and fraction `θ` with `t = (1-θ) t_k + θ t_{k+1}`.
    pub fn locate(&self, t: f64) -> Option<(usize, f64)> {
        let tol = 1e-12 * (1.0 + t.abs());
        let v = &self.0;
        if t < v[0] - tol || t > v[v.len() - 1] + tol {
            return None;
        }
        if v.len() == 1 {
            return Some((0, 0.0));
        }
        let k = v.partition_point(|x| *x <= t).saturating_sub(1).min(v.len() - 2);
        let theta = ((t - v[k]) / (v[k + 1] - v[k])).clamp(0.0, 1.0);
        Some((k, theta))
    }
}

/// Time-indexed family of measures of a single representation kind.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureFlow {
    times: TimeGrid,
    states: Vec<Measure>,
}

impl MeasureFlow {
    pub fn new(times: TimeGrid, states: Vec<Measure>) -> Result<Self> {
        if states.len() != times.len() {
            return Err(Error::Usage(format!(
                "{} states for {} time nodes",
                states.len(),
                times.len()
            )));
        }
        let first = &states[0];
        for s in &states[1..] {
            if s.dim() != first.dim() {
                return Err(Error::Usage("flow states must share a dimension".into()));
            }
            match (first, s) {
                (Measure::Grid(a), Measure::Grid(b)) if !a.same_geometry(b) => {
                    return Err(Error::Usage("grid flow states must share a grid".into()))
                }
                (Measure::Grid(_), Measure::Empirical(_)) | (Measure::Empirical(_), Measure::Grid(_)) => {
                    return Err(Error::Usage("flow states must all be grids or all be particle clouds".into()))
                }
                _ => {}
            }
        }
        Ok(Self { times, states })
    }

    /// The flow that stays at `m` over the given times.
    pub fn constant(m: Measure, times: TimeGrid) -> Self {
        let states = vec![m; times.len()];
        Self { times, states }
    }

    pub fn times(&self) -> &TimeGrid {
        &self.times
    }

    pub fn states(&self) -> &[Measure] {
        &self.states
    }

    pub fn initial(&self) -> &Measure {
        &self.states[0]
    }

    pub fn terminal(&self) -> &Measure {
        &self.states[self.states.len() - 1]
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn is_grid(&self) -> bool {
        self.states[0].is_grid()
    }

    /// True if the flow is defined on `[s, t]`.
    pub fn covers(&self, s: f64, t: f64) -> bool {
        self.times.locate(s).is_some() && self.times.locate(t).is_some()
    }

    /// The law at time `t`, interpolated linearly between nodes.
    pub fn law_at(&self, t: f64) -> Result<Cow<'_, Measure>> {
        let (k, theta) = self.times.locate(t).ok_or_else(|| {
            Error::Usage(format!(
                "time {t} outside the flow range [{}, {}]",
                self.times.start(),
                self.times.end()
            ))
        })?;
        if theta == 0.0 {
            return Ok(Cow::Borrowed(&self.states[k]));
        }
        if theta == 1.0 {
            return Ok(Cow::Borrowed(&self.states[k + 1]));
        }
        Ok(Cow::Owned(self.states[k].interpolate(&self.states[k + 1], theta)?))
    }

    /// 64-bit FNV-1a hash of the time nodes and state data, for provenance records.
    pub fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: f64| {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for t in self.times.as_slice() {
            eat(*t);
        }
        for s in &self.states {
            match s {
                Measure::Grid(g) => {
                    g.origin().iter().chain(g.spacing()).chain(g.values()).for_each(|v| eat(*v))
                }
                Measure::Empirical(m) => m.points().iter().chain(m.weights()).for_each(|v| eat(*v)),
            }
        }
        format!("{h:016x}")
    }
}
