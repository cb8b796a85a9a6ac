use std::sync::Arc;

use mvflow::coefficients::library::{heat, mean_field_ou, ornstein_uhlenbeck};
use mvflow::coefficients::{make_local, CoefficientModel};
use mvflow::measures::{DensityGrid, GridSpec, Measure, MeasureFlow, TimeGrid};
use mvflow::parametrix::ParametrixConfig;
use mvflow::picard::{
    decoupled_flow_density, fitted_contraction_ratio, flow_distance, history_records, picard_map, picard_solve, Backend,
    PicardConfig,
};
use mvflow::Error;

fn gaussian(spec: &GridSpec<f64>, m: f64, sd: f64) -> Measure {
    let c = 1.0 / (sd * std::f64::consts::TAU.sqrt());
    Measure::Grid(DensityGrid::from_fn(spec, |z| c * (-0.5 * ((z[0] - m) / sd).powi(2)).exp()).unwrap())
}

fn dirac0() -> Measure {
    Measure::dirac(&[0.0]).unwrap()
}

fn terminal_grid(f: &MeasureFlow) -> &DensityGrid<f64> {
    match f.terminal() {
        Measure::Grid(g) => g,
        _ => panic!("grid flow expected"),
    }
}

fn ou_with_nu(horizon: f64) -> PicardConfig {
    let spec = GridSpec::line(-6.0, 7.0, 520).unwrap();
    PicardConfig {
        nu: Some(gaussian(&spec, 1.0, 0.1)),
        grid: Some(spec),
        time_steps: 40,
        ..PicardConfig::new(dirac0(), horizon)
    }
}

#[test]
fn measure_free_map_ignores_its_input() {
    let model = ornstein_uhlenbeck(1.0, 1.0).unwrap();
    let cfg = PicardConfig::new(Measure::dirac(&[0.5]).unwrap(), 0.5);
    let times = cfg.time_grid().unwrap();
    let q1 = MeasureFlow::constant(dirac0(), times.clone());
    let q2 = MeasureFlow::constant(Measure::dirac(&[3.0]).unwrap(), times);
    let (a, _) = picard_map(&model, &q1, &cfg).unwrap();
    let (b, _) = picard_map(&model, &q2, &cfg).unwrap();
    assert!(flow_distance(&a, &b).unwrap() <= 2e-3);
    let sol = picard_solve(&model, &cfg).unwrap();
    assert_eq!(sol.history.len(), 2);
    assert!(sol.history[1].distance_to_previous <= 2e-3);
}

#[test]
fn mean_field_ou_variance_from_frozen_dirac() {
    let model = mean_field_ou(1.0).unwrap();
    let cfg = PicardConfig::new(dirac0(), 1.0);
    let q = MeasureFlow::constant(dirac0(), cfg.time_grid().unwrap());
    let (p, clip) = picard_map(&model, &q, &cfg).unwrap();
    let v = terminal_grid(&p).variance()[0];
    assert!((v - 0.5 * (1.0 - (-2.0f64).exp())).abs() < 2e-3, "variance {v}");
    assert!(clip <= 1e-6);
}

#[test]
fn frozen_coefficients_keep_the_flow_constant() {
    let zero = make_local(
        1,
        1,
        Arc::new(|_, _, _, o: &mut [f64]| o[0] = 0.0),
        Arc::new(|_, _, _, o: &mut [f64]| o[0] = 0.0),
    )
    .unwrap();
    let spec = GridSpec::line(-3.0, 3.0, 120).unwrap();
    let cfg = PicardConfig {
        grid: Some(spec.clone()),
        ..PicardConfig::new(gaussian(&spec, 0.2, 0.5), 1.0)
    };
    let q = MeasureFlow::constant(dirac0(), cfg.time_grid().unwrap());
    let (p, _) = picard_map(&zero, &q, &cfg).unwrap();
    for s in p.states() {
        assert_eq!(s, p.initial());
    }
}

#[test]
fn fokker_planck_conserves_mass_and_sign() {
    let model = mean_field_ou(0.8).unwrap();
    let spec = GridSpec::line(-5.0, 5.0, 200).unwrap();
    let cfg = PicardConfig {
        grid: Some(spec.clone()),
        ..PicardConfig::new(gaussian(&spec, 2.0, 0.3), 1.0)
    };
    let q = MeasureFlow::constant(gaussian(&spec, -1.0, 1.0), cfg.time_grid().unwrap());
    let (p, clip) = picard_map(&model, &q, &cfg).unwrap();
    for s in p.states() {
        let Measure::Grid(g) = s else { panic!() };
        assert!((g.mass() - 1.0).abs() < 1e-10);
        assert!(g.values().iter().all(|v| *v >= 0.0));
    }
    assert!(clip <= 1e-6);
}

#[test]
fn strong_drift_stays_positive() {
    // Cell Péclet numbers far above one exercise the upwind branch.
    let model = make_local(
        1,
        1,
        Arc::new(|_, x: &[f64], _, o: &mut [f64]| o[0] = -20.0 * x[0]),
        Arc::new(|_, _, _, o: &mut [f64]| o[0] = 0.2),
    )
    .unwrap();
    let spec = GridSpec::line(-2.0, 2.0, 100).unwrap();
    let cfg = PicardConfig {
        grid: Some(spec.clone()),
        ..PicardConfig::new(Measure::dirac(&[1.5]).unwrap(), 0.5)
    };
    let (p, clip) = picard_map(&model, &MeasureFlow::constant(dirac0(), cfg.time_grid().unwrap()), &cfg).unwrap();
    assert!(clip <= 1e-6, "clip {clip}");
    assert!((terminal_grid(&p).mass() - 1.0).abs() < 1e-10);
}

#[test]
fn step_above_stability_limit_is_rejected() {
    let cfg = PicardConfig {
        backend: Backend::FokkerPlanck { step: Some(0.1) },
        ..PicardConfig::new(dirac0(), 1.0)
    };
    let q = MeasureFlow::constant(dirac0(), cfg.time_grid().unwrap());
    match picard_map(&heat(1, 1.0).unwrap(), &q, &cfg) {
        Err(Error::Usage(msg)) => assert!(msg.contains("Δt <=")),
        other => panic!("expected usage error, got {other:?}"),
    }
}

#[test]
fn short_input_flow_is_rejected() {
    let cfg = PicardConfig::new(dirac0(), 1.0);
    let q = MeasureFlow::constant(dirac0(), TimeGrid::uniform(0.0, 0.5, 5).unwrap());
    assert!(matches!(picard_map(&heat(1, 1.0).unwrap(), &q, &cfg), Err(Error::Usage(_))));
}

#[test]
fn distance_examples() {
    let spec = GridSpec::line(-4.0, 4.0, 80).unwrap();
    let times = TimeGrid::uniform(0.0, 1.0, 2).unwrap();
    let left = Measure::Grid(DensityGrid::from_fn(&spec, |z| if z[0] < -1.0 && z[0] > -3.0 { 1.0 } else { 0.0 }).unwrap().normalized().unwrap());
    let right = Measure::Grid(DensityGrid::from_fn(&spec, |z| if z[0] > 1.0 && z[0] < 3.0 { 1.0 } else { 0.0 }).unwrap().normalized().unwrap());
    let p = MeasureFlow::new(times.clone(), vec![left.clone(), left.clone(), left.clone()]).unwrap();
    let q = MeasureFlow::new(times.clone(), vec![left.clone(), left.clone(), right]).unwrap();
    assert_eq!(flow_distance(&p, &p).unwrap(), 0.0);
    assert!((flow_distance(&p, &q).unwrap() - 2.0).abs() < 1e-12);
    let other = MeasureFlow::constant(left, TimeGrid::uniform(0.0, 1.0, 4).unwrap());
    assert!(matches!(flow_distance(&p, &other), Err(Error::Usage(_))));
    let cloud = MeasureFlow::constant(dirac0(), times);
    assert!(matches!(flow_distance(&p, &cloud), Err(Error::Usage(_))));
}

#[test]
fn mean_field_ou_iterates_contract() {
    let model = mean_field_ou(1.0).unwrap();
    let sol = picard_solve(&model, &ou_with_nu(0.25)).unwrap();
    let d = sol.distances();
    assert!(d[1] > 0.0 && d[1] < d[0]);
    assert!(sol.ratios().iter().all(|r| *r < 1.0), "{:?}", sol.ratios());
    let fixed = picard_map(&model, &sol.flow, &ou_with_nu(0.25)).unwrap().0;
    assert!(flow_distance(&fixed, &sol.flow).unwrap() <= 2.0 * 1e-8);
    let records = history_records(&sol.history);
    assert_eq!(records.len(), sol.history.len());
    assert!(records[0].ratio.is_none() && records[1].ratio.is_some());
    let json = serde_json::to_string(&records).unwrap();
    assert!(json.contains("\"distance\""));
}

#[test]
fn fitted_ratio_shrinks_with_horizon() {
    let model = mean_field_ou(1.0).unwrap();
    let fitted: Vec<f64> = [0.5, 0.25, 0.125]
        .iter()
        .map(|t| {
            let cfg = ou_with_nu(*t);
            let sol = picard_solve(&model, &cfg).unwrap();
            fitted_contraction_ratio(&sol.history, 10.0 * cfg.tol).unwrap()
        })
        .collect();
    assert!(fitted[1] <= fitted[0] && fitted[2] <= fitted[1], "{fitted:?}");
    // Halving T cuts the rate by about 0.6 here.
    assert!(fitted[2] <= 0.75 * fitted[1] && fitted[1] <= 0.75 * fitted[0], "{fitted:?}");
}

#[test]
fn backends_agree() {
    let model = mean_field_ou(1.0).unwrap();
    let spec = GridSpec::line(-4.0, 4.0, 160).unwrap();
    let mut cfg = PicardConfig {
        grid: Some(spec),
        time_steps: 10,
        ..PicardConfig::new(dirac0(), 0.5)
    };
    let sol = picard_solve(&model, &cfg).unwrap();
    cfg.backend = Backend::Particle {
        particles: 100_000,
        substeps: 5,
        bandwidth: None,
    };
    let (particles, _) = picard_map(&model, &sol.flow, &cfg).unwrap();
    let d = flow_distance(&particles, &sol.flow).unwrap();
    assert!(d <= 0.08, "backend distance {d}");
}

#[test]
fn non_convergence_carries_ratios() {
    let cfg = PicardConfig {
        max_iters: 2,
        ..ou_with_nu(0.5)
    };
    match picard_solve(&mean_field_ou(1.0).unwrap(), &cfg) {
        Err(Error::NonConvergence { iterations, ratios, last_distance }) => {
            assert_eq!(iterations, 2);
            assert_eq!(ratios.len(), 1);
            assert!(last_distance > cfg.tol);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn config_guards() {
    let bad = [
        PicardConfig::new(dirac0(), 0.0),
        PicardConfig { time_steps: 1, ..PicardConfig::new(dirac0(), 1.0) },
        PicardConfig { tol: 0.0, ..PicardConfig::new(dirac0(), 1.0) },
        PicardConfig::new(Measure::dirac(&[0.0, 0.0]).unwrap(), 1.0),
    ];
    for cfg in bad {
        assert!(matches!(picard_solve(&heat(1, 1.0).unwrap(), &cfg), Err(Error::Usage(_))));
    }
}

#[test]
fn decoupled_density_follows_the_linear_mean() {
    let model = mean_field_ou(1.0).unwrap();
    let cfg = PicardConfig::new(dirac0(), 0.5);
    let sol = picard_solve(&model, &cfg).unwrap();
    let m_flow = terminal_grid(&sol.flow).mean()[0];
    assert!(m_flow.abs() < 1e-10);
    let model: Arc<dyn CoefficientModel> = Arc::new(model);
    let dens = decoupled_flow_density(model, &sol.flow, 0.0, &[1.0], 0.5, &ParametrixConfig::default()).unwrap();
    let expected = m_flow + (1.0 - m_flow) * (-0.5f64).exp();
    // From x = 1 the drift is of order one and the K = 3 truncation leaves
    // about 0.033 on the mean (K = 4, 5 give 0.020, 0.006).
    assert!((dens.values.mean()[0] - expected).abs() < 0.05, "mean {}", dens.values.mean()[0]);

    let heat_model: Arc<dyn CoefficientModel> = Arc::new(heat(1, 1.0).unwrap());
    let h = decoupled_flow_density(heat_model, &sol.flow, 0.0, &[0.0], 0.5, &ParametrixConfig::default()).unwrap();
    let v = h.values.variance()[0];
    assert!((v - 0.5).abs() < 1e-3);
}
