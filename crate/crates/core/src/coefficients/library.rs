//! Ready-made models used by examples, scenarios and tests.

use std::sync::Arc;

use crate::coefficients::{make_first_order, make_local, make_scalar, FirstOrderModel, LocalModel, ScalarModel};
use crate::error::Result;

/// Brownian motion scaled by `sigma` in dimension `d`: `b = 0`, `σ = sigma·I`.
pub fn heat(d: usize, sigma: f64) -> Result<LocalModel> {
    Ok(make_local(
        d,
        d,
        Arc::new(move |_, _, _, o: &mut [f64]| o.fill(0.0)),
        Arc::new(move |_, _, _, o: &mut [f64]| {
            o.fill(0.0);
            for i in 0..d {
                o[i * d + i] = sigma;
            }
        }),
    )?
    .named("heat"))
}

/// Ornstein-Uhlenbeck process `dX = -κ X dt + σ dW` in dimension one.
pub fn ornstein_uhlenbeck(kappa: f64, sigma: f64) -> Result<LocalModel> {
    Ok(make_local(
        1,
        1,
        Arc::new(move |_, x: &[f64], _, o: &mut [f64]| o[0] = -kappa * x[0]),
        Arc::new(move |_, _, _, o: &mut [f64]| o[0] = sigma),
    )?
    .named("ornstein_uhlenbeck"))
}

/// Mean-field Ornstein-Uhlenbeck model `b(x, μ) = mean(μ) - x`, `σ = sigma`,
/// written as a scalar interaction with `ψ(y) = y`.
pub fn mean_field_ou(sigma: f64) -> Result<ScalarModel> {
    Ok(make_scalar(
        1,
        1,
        vec![Arc::new(|y: &[f64]| y[0])],
        vec![],
        Arc::new(|_, x: &[f64], z: &[f64], o: &mut [f64]| o[0] = z[0] - x[0]),
        Arc::new(move |_, _, _, o: &mut [f64]| o[0] = sigma),
    )?
    .with_drift_gradient(Arc::new(|_, _, _, o: &mut [f64]| o[0] = 1.0))
    .named("mean_field_ou"))
}

/// First order interaction `b̄(x, y) = κ (y - x)`, `σ̄ = sigma`, in dimension one.
pub fn attraction(kappa: f64, sigma: f64) -> Result<FirstOrderModel> {
    Ok(make_first_order(
        1,
        1,
        Arc::new(move |_, x: &[f64], y: &[f64], o: &mut [f64]| o[0] = kappa * (y[0] - x[0])),
        Arc::new(move |_, _, _, o: &mut [f64]| o[0] = sigma),
    )?
    .named("attraction"))
}
