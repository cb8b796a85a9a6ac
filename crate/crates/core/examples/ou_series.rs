use std::sync::Arc;

use mvflow::coefficients::library::ornstein_uhlenbeck;
use mvflow::measures::{l1_density_distance, DensityGrid, Measure};
use mvflow::parametrix::{density_series, verify_derivative_scaling, ParametrixConfig, ProxySpec};

fn main() -> mvflow::Result<()> {
    let model = Arc::new(ornstein_uhlenbeck(1.0, 1.0)?);
    let spec = ProxySpec::with_fixed_law(model, Measure::dirac(&[0.0])?, 0.0, 0.5)?;
    let var = (1.0 - (-1.0f64).exp()) / 2.0;
    for order in 0..=3 {
        let cfg = ParametrixConfig { order, ..ParametrixConfig::default() };
        let p = density_series(&spec, 0.5, &[0.0], &cfg)?;
        let exact = DensityGrid::from_fn(&p.values.spec(), |z| {
            (-0.5 * z[0] * z[0] / var).exp() / (std::f64::consts::TAU * var).sqrt()
        })?;
        println!(
            "K={order}  L1={:.5}  raw mass={:.6}",
            l1_density_distance(&p.values, &exact)?,
            p.raw_mass
        );
    }
    for n in 0..=2 {
        let r = verify_derivative_scaling(&spec, &ParametrixConfig::default(), n, &[0.005, 0.05, 0.5], 0.0)?;
        println!("n={n}  slope={:.4}  sups={:?}", r.slope, r.sups);
    }
    Ok(())
}
