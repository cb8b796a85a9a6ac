//! Small numerical helpers shared by several modules.

use crate::scalar::Real;

/// Correctly rounded sum of floating point values (Shewchuk's algorithm).
///
/// The result does not depend on the order of the inputs, which makes
/// reductions over particle clouds invariant under permutations.
pub fn exact_sum<T: Real, I: IntoIterator<Item = T>>(values: I) -> T {
    let mut partials: Vec<T> = Vec::new();
    let mut special = T::zero();
    for mut x in values {
        if !x.is_finite() {
            special = special + x;
            continue;
        }
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != T::zero() {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    if special != T::zero() || special.is_nan() {
        return special;
    }
    // Round the partials, highest magnitude first, with the half-way correction.
    let mut n = partials.len();
    if n == 0 {
        return T::zero();
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = T::zero();
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != T::zero() {
            break;
        }
    }
    if n > 0
        && ((lo < T::zero() && partials[n - 1] < T::zero())
            || (lo > T::zero() && partials[n - 1] > T::zero()))
    {
        let y = lo + lo;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}

/// Least-squares line through `(x, y)`; returns `(slope, intercept)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Median of a slice (NaNs sort last).
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}
