use std::sync::Arc;

use mvflow::coefficients::library::{attraction, heat, ornstein_uhlenbeck};
use mvflow::coefficients::{make_local, make_scalar, CoefficientModel, ScalarFn};
use mvflow::kernels::{gauss_eval, CovMatrix};
use mvflow::measures::{l1_density_distance, DensityGrid, EmpiricalMeasure, GridSpec, Measure};
use mvflow::parametrix::{
    density_of_law, density_series, law_series, parametrix_kernel, proxy_density, spacetime_convolve,
    verify_derivative_scaling, verify_gaussian_bound, BoundSettings, ConvolveConfig, ParametrixConfig, ProxySpec,
};
use mvflow::Error;

fn gauss(var: f64, u: f64) -> f64 {
    (-0.5 * u * u / var).exp() / (std::f64::consts::TAU * var).sqrt()
}

fn dirac(x: f64) -> Measure {
    Measure::dirac(&[x]).unwrap()
}

fn fixed(model: Arc<dyn CoefficientModel>, horizon: f64) -> ProxySpec {
    ProxySpec::with_fixed_law(model, dirac(0.0), 0.0, horizon).unwrap()
}

fn local(drift: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, sigma: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Arc<dyn CoefficientModel> {
    Arc::new(
        make_local(
            1,
            1,
            Arc::new(move |t, x: &[f64], _, o: &mut [f64]| o[0] = drift(t, x[0])),
            Arc::new(move |t, x: &[f64], _, o: &mut [f64]| o[0] = sigma(t, x[0])),
        )
        .unwrap(),
    )
}

fn exact_grid(spec: &GridSpec<f64>, f: impl Fn(f64) -> f64) -> DensityGrid<f64> {
    DensityGrid::from_fn(spec, |z| f(z[0])).unwrap()
}

#[test]
fn proxy_density_examples() {
    let spec = fixed(Arc::new(heat(1, 1.0).unwrap()), 2.0);
    for (x, z) in [(0.0, 0.3), (1.0, -0.5)] {
        let v = proxy_density(&spec, 0.5, 1.5, &[x], &[0.0], &[z]).unwrap();
        assert!((v - gauss(1.0, z - x)).abs() < 1e-14);
    }

    let ramp = local(|_, _| 0.0, |t, _| (2.0 * t).sqrt());
    let spec = fixed(ramp, 1.0);
    let v = proxy_density(&spec, 0.0, 1.0, &[0.0], &[0.0], &[0.7]).unwrap();
    assert!((v - gauss(1.0, 0.7)).abs() < 1e-12);

    let sin: ScalarFn = Arc::new(|y: &[f64]| y[0].sin());
    let scalar = Arc::new(
        make_scalar(
            1,
            1,
            vec![],
            vec![sin],
            Arc::new(|_, _, _, o: &mut [f64]| o[0] = 0.0),
            Arc::new(|_, x: &[f64], z: &[f64], o: &mut [f64]| o[0] = 1.0 + 0.2 * x[0].cos() + z[0] * z[0]),
        )
        .unwrap(),
    );
    let law = Measure::dirac(&[0.0]).unwrap();
    let y = 0.4;
    let frozen = scalar.diffusion(0.0, &[y], &law).unwrap()[(0, 0)];
    let spec = ProxySpec::with_fixed_law(scalar, law, 0.0, 1.0).unwrap();
    let v = proxy_density(&spec, 0.2, 0.7, &[0.1], &[y], &[0.5]).unwrap();
    let oracle = gauss_eval(&CovMatrix::scalar(0.5 * frozen).unwrap(), &[0.4]).unwrap().value();
    assert!((v - oracle).abs() < 1e-13);
}

#[test]
fn proxy_density_rejects_bad_intervals() {
    let spec = fixed(Arc::new(heat(1, 1.0).unwrap()), 1.0);
    assert!(matches!(proxy_density(&spec, 0.5, 0.5, &[0.0], &[0.0], &[0.0]), Err(Error::Usage(_))));
    assert!(matches!(proxy_density(&spec, 0.5, 2.0, &[0.0], &[0.0], &[0.0]), Err(Error::Usage(_))));
}

#[test]
fn degenerate_diffusion_is_domain_error() {
    let spec = fixed(local(|_, _| 0.0, |_, _| 0.0), 1.0);
    assert!(matches!(proxy_density(&spec, 0.0, 1.0, &[0.0], &[0.0], &[0.0]), Err(Error::Domain(_))));
    let cfg = ParametrixConfig {
        space_grid: Some(GridSpec::line(-4.0, 4.0, 64).unwrap()),
        ..ParametrixConfig::default()
    };
    assert!(matches!(density_series(&spec, 0.5, &[0.0], &cfg), Err(Error::Domain(_))));
}

#[test]
fn kernel_vanishes_without_drift_and_spatial_diffusion() {
    let spec = fixed(local(|_, _| 0.0, |t, _| 1.0 + t), 1.0);
    for (x, y) in [(0.0, 0.0), (0.3, -1.0), (2.0, 1.5)] {
        assert_eq!(parametrix_kernel(&spec, 0.1, 0.8, &[x], &[y]).unwrap(), 0.0);
    }
}

#[test]
fn kernel_constant_drift_reduces_to_gaussian_derivative() {
    let beta = 0.7;
    let spec = fixed(local(move |_, _| beta, |_, _| 1.0), 1.0);
    for (r, t, x, y) in [(0.0, 0.5, 0.0, 0.4), (0.2, 0.9, 1.0, -0.3)] {
        let k = parametrix_kernel(&spec, r, t, &[x], &[y]).unwrap();
        let oracle = beta * (y - x) / (t - r) * gauss(t - r, y - x);
        assert!((k - oracle).abs() < 1e-12, "{k} vs {oracle}");
    }
}

#[test]
fn kernel_matches_direct_formula() {
    let spec = fixed(local(|_, _| 0.0, |_, x: f64| (1.0 + 0.1 * x.sin()).sqrt()), 1.0);
    let (r, t, x, y) = (0.0, 0.5, 0.0, 1.0);
    let a = |z: f64| 1.0 + 0.1 * z.sin();
    let var = (t - r) * a(y);
    let u = y - x;
    let h2 = (u / var).powi(2) - 1.0 / var;
    let oracle = 0.5 * (a(x) - a(y)) * h2 * (-0.5 * u * u / var).exp() / (std::f64::consts::TAU * var).sqrt();
    let k = parametrix_kernel(&spec, r, t, &[x], &[y]).unwrap();
    assert!((k - oracle).abs() < 1e-12, "{k} vs {oracle}");
}

#[test]
fn convolution_of_heat_kernels() {
    let cfg = ConvolveConfig {
        time_nodes: 16,
        ..ConvolveConfig::new(GridSpec::line(-10.0, 10.0, 4000).unwrap())
    };
    let heat_kernel = |a: f64, b: f64, p: f64, q: f64| Ok(gauss(b - a, q - p));
    for (r, t, x, y) in [(0.0, 1.0, 0.0, 0.5), (0.5, 1.5, -0.3, 1.0)] {
        let v = spacetime_convolve(heat_kernel, heat_kernel, r, t, x, y, &cfg).unwrap();
        assert!((v - gauss(t - r, y - x)).abs() < 1e-6, "{v}");
    }
    // Over an interval of length τ the convolution of heat kernels is τ·g(τ, ·).
    let v = spacetime_convolve(heat_kernel, heat_kernel, 0.0, 0.5, 0.0, 0.2, &cfg).unwrap();
    assert!((v - 0.5 * gauss(0.5, 0.2)).abs() < 1e-6);
    let zero = |_: f64, _: f64, _: f64, _: f64| Ok(0.0);
    assert_eq!(spacetime_convolve(heat_kernel, zero, 0.0, 1.0, 0.0, 0.0, &cfg).unwrap(), 0.0);
}

#[test]
fn convolution_time_profile_is_a_beta_function() {
    let (a, b) = (0.5, 0.75);
    let cfg = ConvolveConfig {
        time_nodes: 16,
        power: 4,
        ..ConvolveConfig::new(GridSpec::line(-12.0, 12.0, 2400).unwrap())
    };
    let f = move |r: f64, v: f64, _: f64, _: f64| Ok((v - r).powf(a - 1.0));
    let g = move |v: f64, t: f64, z: f64, y: f64| Ok((t - v).powf(b - 1.0) * gauss(1.0, z - y));
    let beta = statrs::function::beta::beta(a, b);
    for (r, t) in [(0.0, 1.0), (0.2, 0.7), (1.0, 3.0)] {
        let v = spacetime_convolve(f, g, r, t, 0.0, 0.0, &cfg).unwrap();
        let oracle = beta * (t - r).powf(a + b - 1.0);
        assert!((v - oracle).abs() < 1e-4, "{v} vs {oracle}");
    }
}

#[test]
fn convolution_over_budget_is_resource_error() {
    let cfg = ConvolveConfig {
        budget: 100,
        ..ConvolveConfig::new(GridSpec::line(-1.0, 1.0, 100).unwrap())
    };
    let one = |_: f64, _: f64, _: f64, _: f64| Ok(1.0);
    assert!(matches!(spacetime_convolve(one, one, 0.0, 1.0, 0.0, 0.0, &cfg), Err(Error::Resource(_))));
}

#[test]
fn constant_coefficients_give_the_exact_gaussian() {
    let spec = fixed(Arc::new(heat(1, 1.3).unwrap()), 1.0);
    for order in [0, 1, 3] {
        let cfg = ParametrixConfig { order, ..ParametrixConfig::default() };
        let p = density_series(&spec, 0.6, &[0.2], &cfg).unwrap();
        let exact = exact_grid(&p.values.spec(), |z| gauss(1.69 * 0.6, z - 0.2));
        assert!(l1_density_distance(&p.values, &exact).unwrap() <= 1e-6);
        for term in &p.terms[1..] {
            assert!(term.iter().all(|v| v.abs() <= 1e-12));
        }
    }
}

fn ou_exact(spec: &GridSpec<f64>, t: f64) -> DensityGrid<f64> {
    let var = (1.0 - (-2.0 * t).exp()) / 2.0;
    exact_grid(spec, |z| gauss(var, z))
}

#[test]
fn ou_series_converges_monotonically() {
    let spec = fixed(Arc::new(ornstein_uhlenbeck(1.0, 1.0).unwrap()), 0.5);
    let mut last = f64::INFINITY;
    for order in 0..=3 {
        let cfg = ParametrixConfig { order, ..ParametrixConfig::default() };
        let p = density_series(&spec, 0.5, &[0.0], &cfg).unwrap();
        let err = l1_density_distance(&p.values, &ou_exact(&p.values.spec(), 0.5)).unwrap();
        assert!(err < last, "order {order}: {err} >= {last}");
        last = err;
    }
    assert!(last <= 0.02, "{last}");
}

#[test]
fn series_mass_approaches_one() {
    let models: Vec<ProxySpec> = vec![
        fixed(Arc::new(ornstein_uhlenbeck(1.0, 1.0).unwrap()), 0.5),
        ProxySpec::with_fixed_law(Arc::new(attraction(1.0, 1.0).unwrap()), dirac(0.5), 0.0, 0.5).unwrap(),
    ];
    for spec in models {
        let mut last = f64::INFINITY;
        for order in 0..=3 {
            let cfg = ParametrixConfig { order, renormalize: false, ..ParametrixConfig::default() };
            let p = density_series(&spec, 0.5, &[0.0], &cfg).unwrap();
            let defect = (p.raw_mass - 1.0).abs();
            assert!(defect <= last + 1e-8, "order {order}: {defect} > {last}");
            last = defect;
        }
    }
}

#[test]
fn series_terms_decay_in_order() {
    let spec = fixed(Arc::new(ornstein_uhlenbeck(1.0, 1.0).unwrap()), 0.5);
    for t in [0.125, 0.5] {
        let cfg = ParametrixConfig { order: 3, renormalize: false, ..ParametrixConfig::default() };
        let p = density_series(&spec, t, &[0.3], &cfg).unwrap();
        let axis = p.axis();
        let sups: Vec<f64> = p
            .terms
            .iter()
            .map(|term| {
                term.iter()
                    .zip(&axis)
                    .filter(|(_, z)| (*z - 0.3).abs() <= 6.0 * t.sqrt())
                    .map(|(v, z)| v.abs() / gauss(2.0 * t, z - 0.3))
                    .fold(0.0, f64::max)
            })
            .collect();
        for k in 1..sups.len() {
            assert!(sups[k] < sups[k - 1], "t={t}: {sups:?}");
        }
    }
}

#[test]
fn even_coefficients_give_even_densities() {
    let spec = fixed(local(|_, x| -x.powi(3), |_, x: f64| (1.0 + 0.3 * x.cos()).sqrt()), 0.5);
    let cfg = ParametrixConfig { order: 2, ..ParametrixConfig::default() };
    let p = density_series(&spec, 0.4, &[0.0], &cfg).unwrap();
    let v = p.values.values();
    for j in 0..v.len() {
        assert!((v[j] - v[v.len() - 1 - j]).abs() <= 1e-10);
    }
}

#[test]
fn time_dependent_diffusion_is_integrated_exactly() {
    let spec = fixed(local(|_, _| 0.0, |t, _| (2.0 * t).sqrt().max(1e-3)), 1.0);
    let cfg = ParametrixConfig { order: 1, ..ParametrixConfig::default() };
    let p = density_series(&spec, 1.0, &[0.0], &cfg).unwrap();
    let exact = exact_grid(&p.values.spec(), |z| gauss(1.0, z));
    assert!(l1_density_distance(&p.values, &exact).unwrap() <= 1e-5);
}

#[test]
fn density_of_law_examples() {
    let spec = fixed(Arc::new(heat(1, 1.0).unwrap()), 1.0);
    let cfg = ParametrixConfig::default();

    let single = density_series(&spec, 0.5, &[0.3], &cfg).unwrap();
    let law = density_of_law(&spec, 0.5, &cfg, &dirac(0.3)).unwrap();
    assert_eq!(law, single.values);

    let grid = GridSpec::line(-8.0, 8.0, 512).unwrap();
    let start = Measure::Grid(exact_grid(&grid, |z| gauss(1.0, z)));
    let cfg_grid = ParametrixConfig {
        space_grid: Some(GridSpec::line(-10.0, 10.0, 1024).unwrap()),
        ..cfg.clone()
    };
    let p = density_of_law(&spec, 0.5, &cfg_grid, &start).unwrap();
    let exact = exact_grid(&p.spec(), |z| gauss(1.5, z));
    let err = l1_density_distance(&p, &exact).unwrap();
    assert!(err <= 1e-3, "{err}");

    let mix = Measure::Empirical(EmpiricalMeasure::uniform(1, vec![-1.0, 1.0]).unwrap());
    let p = density_of_law(&spec, 0.5, &cfg_grid, &mix).unwrap();
    let exact = exact_grid(&p.spec(), |z| 0.5 * gauss(0.5, z + 1.0) + 0.5 * gauss(0.5, z - 1.0));
    assert!(l1_density_distance(&p, &exact).unwrap() <= 1e-6);
}

#[test]
fn density_of_law_is_linear() {
    let spec = fixed(Arc::new(ornstein_uhlenbeck(1.0, 1.0).unwrap()), 0.5);
    let cfg = ParametrixConfig {
        order: 2,
        renormalize: false,
        space_grid: Some(GridSpec::line(-7.0, 7.0, 512).unwrap()),
        ..ParametrixConfig::default()
    };
    let a = density_series(&spec, 0.5, &[-0.8], &cfg).unwrap();
    let b = density_series(&spec, 0.5, &[0.6], &cfg).unwrap();
    let mix = Measure::Empirical(EmpiricalMeasure::new(1, vec![-0.8, 0.6], vec![0.25, 0.75]).unwrap());
    let m = law_series(&spec, 0.5, &cfg, &mix).unwrap();
    for j in 0..m.raw.len() {
        let lin = 0.25 * a.raw[j] + 0.75 * b.raw[j];
        assert!((m.raw[j] - lin).abs() <= 1e-12 * (1.0 + lin.abs()));
    }
}

#[test]
fn config_guards() {
    let spec = fixed(Arc::new(heat(1, 1.0).unwrap()), 1.0);
    let too_deep = ParametrixConfig { order: 7, ..ParametrixConfig::default() };
    assert!(matches!(density_series(&spec, 0.5, &[0.0], &too_deep), Err(Error::Usage(_))));
    let few = ParametrixConfig { time_nodes: 4, ..ParametrixConfig::default() };
    assert!(matches!(density_series(&spec, 0.5, &[0.0], &few), Err(Error::Usage(_))));
    let tiny = ParametrixConfig { memory_budget_mb: 0, ..ParametrixConfig::default() };
    assert!(matches!(density_series(&spec, 0.5, &[0.0], &tiny), Err(Error::Resource(_))));
    let spec2 = ProxySpec::with_fixed_law(Arc::new(heat(2, 1.0).unwrap()), Measure::dirac(&[0.0, 0.0]).unwrap(), 0.0, 1.0).unwrap();
    assert!(matches!(density_series(&spec2, 0.5, &[0.0, 0.0], &ParametrixConfig::default()), Err(Error::Usage(_))));
}

fn raw_densities(spec: &ProxySpec, taus: &[f64]) -> Vec<mvflow::parametrix::TransitionDensity> {
    let cfg = ParametrixConfig::default().raw();
    taus.iter().map(|t| density_series(spec, *t, &[0.0], &cfg).unwrap()).collect()
}

#[test]
fn gaussian_bound_for_heat_is_one_at_c_one() {
    let spec = fixed(Arc::new(heat(1, 1.0).unwrap()), 1.0);
    let ds = raw_densities(&spec, &[0.01, 0.1, 1.0]);
    let r = verify_gaussian_bound(&ds, &[1.0, 2.0], BoundSettings::new(0.0, 1.0)).unwrap();
    let row = r.row(1.0).unwrap();
    for s in &row.sups {
        assert!((s - 1.0).abs() < 1e-12, "{s}");
    }
    assert_eq!(r.chosen_c, Some(1.0));
}

#[test]
fn gaussian_bound_for_ou_is_stable() {
    let spec = fixed(Arc::new(ornstein_uhlenbeck(1.0, 1.0).unwrap()), 0.5);
    let ds = raw_densities(&spec, &[0.125, 0.25, 0.5]);
    let r = verify_gaussian_bound(&ds, &[2.0], BoundSettings::new(6.0, 1.0)).unwrap();
    let row = r.row(2.0).unwrap();
    assert!(row.passed, "{row:?}");
    assert!(row.bound_constant < 3.0);
}

#[test]
fn gaussian_bound_constant_grows_with_drift() {
    let taus = [0.01, 0.1, 0.5];
    let mut last = 0.0;
    for beta in [0.5, 1.0, 2.0] {
        let spec = fixed(local(move |_, _| beta, |_, _| 1.0), 0.5);
        let ds = raw_densities(&spec, &taus);
        let r = verify_gaussian_bound(&ds, &[2.0], BoundSettings::new(beta, 1.0)).unwrap();
        let k = r.row(2.0).unwrap().bound_constant;
        assert!(k >= last, "beta={beta}: {k} < {last}");
        last = k;
    }
}

#[test]
fn gaussian_bound_rejects_renormalized_input() {
    let spec = fixed(Arc::new(heat(1, 1.0).unwrap()), 1.0);
    let d = density_series(&spec, 0.5, &[0.0], &ParametrixConfig::default()).unwrap();
    assert!(matches!(verify_gaussian_bound(&[d], &[1.0], BoundSettings::new(0.0, 1.0)), Err(Error::Usage(_))));
}

#[test]
fn heat_derivative_scaling_is_exact() {
    let spec = fixed(Arc::new(heat(1, 1.0).unwrap()), 1.0);
    let cfg = ParametrixConfig { order: 1, ..ParametrixConfig::default() };
    for n in 0..=2u32 {
        let r = verify_derivative_scaling(&spec, &cfg, n, &[0.005, 0.05, 0.5], 0.0).unwrap();
        assert!((r.slope + 0.5 * n as f64).abs() < 0.01, "n={n}: {}", r.slope);
        assert!(r.passed && r.within_band);
    }
}

#[test]
fn ou_derivative_scaling_within_band() {
    let spec = fixed(Arc::new(ornstein_uhlenbeck(1.0, 1.0).unwrap()), 0.5);
    let cfg = ParametrixConfig::default();
    for n in 0..=2u32 {
        let r = verify_derivative_scaling(&spec, &cfg, n, &[0.005, 0.05, 0.5], 0.0).unwrap();
        assert!(r.within_band, "n={n}: {r:?}");
    }
}
