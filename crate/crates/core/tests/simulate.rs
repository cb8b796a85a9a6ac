use std::sync::Arc;

use mvflow::coefficients::library::{heat, mean_field_ou, ornstein_uhlenbeck};
use mvflow::coefficients::{make_local, LocalModel};
use mvflow::measures::{DensityGrid, EmpiricalMeasure, GridSpec, Measure, MeasureFlow, TimeGrid};
use mvflow::numeric::linear_fit;
use mvflow::simulate::{
    chaos_convergence, euler_decoupled, euler_decoupled_from, euler_mv, euler_mv_streams, ParticleEnsemble, SimConfig,
};
use mvflow::Error;
use statrs::distribution::{ContinuousCDF, Normal};

fn cfg(particles: usize, dt: f64, horizon: f64, seed: u64) -> SimConfig {
    SimConfig {
        particles,
        dt,
        horizon,
        seed,
        record_every: 10,
        noise_refinement: 1,
    }
}

fn frozen_zero() -> LocalModel {
    make_local(
        1,
        1,
        Arc::new(|_, _, _, o: &mut [f64]| o[0] = 0.0),
        Arc::new(|_, _, _, o: &mut [f64]| o[0] = 0.0),
    )
    .unwrap()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    0.5 * (v[(n - 1) / 2] + v[n / 2])
}

fn dirac_flow(x: f64, s: f64, t: f64) -> MeasureFlow {
    MeasureFlow::constant(Measure::dirac(&[x]).unwrap(), TimeGrid::uniform(s, t, 4).unwrap())
}

#[test]
fn zero_coefficients_keep_particles_fixed() {
    let mu0 = EmpiricalMeasure::new(1, vec![-1.0, 0.5, 2.0], vec![0.2, 0.3, 0.5]).unwrap();
    let run = euler_mv(&frozen_zero(), &mu0, &cfg(50, 0.1, 1.0, 7)).unwrap();
    assert!(run.times().len() > 1);
    for f in run.frames() {
        assert_eq!(f, run.frame(0));
    }
    let dec = euler_decoupled(&frozen_zero(), &dirac_flow(0.0, 0.0, 1.0), 0.0, &[0.25], &cfg(20, 0.1, 1.0, 1)).unwrap();
    assert!(dec.frames().iter().flatten().all(|x| *x == 0.25));
}

#[test]
fn mean_field_ou_moments() {
    let n = 20_000;
    let mut c = cfg(n, 0.005, 1.0, 11);
    c.record_every = 1000;
    let run = euler_mv(&mean_field_ou(1.0).unwrap(), &EmpiricalMeasure::dirac(&[0.0]).unwrap(), &c).unwrap();
    let x = run.frame(run.times().len() - 1);
    let v_exact = 0.5 * (1.0 - (-2.0f64).exp());
    assert!(mean(x).abs() <= 3.0 * v_exact.sqrt() / (n as f64).sqrt());
    // Sampling sd of the variance is about V sqrt(2/N) ≈ 0.0043; Euler bias is about 0.002.
    assert!((var(x) - v_exact).abs() < 0.02, "variance {}", var(x));
}

#[test]
fn heat_marginal_ks() {
    let n = 5000;
    let x0 = 0.3;
    let run = euler_decoupled(&heat(1, 1.0).unwrap(), &dirac_flow(0.0, 0.0, 1.0), 0.0, &[x0], &cfg(n, 0.05, 1.0, 3)).unwrap();
    let mut x = run.frame(run.times().len() - 1).to_vec();
    x.sort_by(f64::total_cmp);
    let law = Normal::new(x0, 1.0).unwrap();
    let ks = x
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let f = law.cdf(*v);
            (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0f64, f64::max);
    assert!(ks <= 1.63 / (n as f64).sqrt(), "ks {ks}");
}

#[test]
fn decoupled_matches_interacting_for_measure_free_models() {
    let model = ornstein_uhlenbeck(0.7, 0.9).unwrap();
    let mu0 = EmpiricalMeasure::new(1, vec![-0.5, 1.0], vec![0.5, 0.5]).unwrap();
    let c = cfg(300, 0.02, 0.6, 5);
    let a = euler_mv(&model, &mu0, &c).unwrap();
    let b = euler_decoupled_from(&model, &dirac_flow(4.0, 0.0, 0.6), 0.0, &mu0, &c).unwrap();
    assert_eq!(a.frames(), b.frames());
}

#[test]
fn chaos_measure_free_improves_with_particles() {
    let model = ornstein_uhlenbeck(1.0, 1.0).unwrap();
    let v = 0.5 * (1.0 - (-2.0f64).exp());
    let m = (-1.0f64).exp();
    let spec = GridSpec::centered(m, 8.0 * v.sqrt(), 2000).unwrap();
    let norm = 1.0 / (std::f64::consts::TAU * v).sqrt();
    let reference = Measure::Grid(DensityGrid::from_fn(&spec, |z| norm * (-(z[0] - m).powi(2) / (2.0 * v)).exp()).unwrap());
    let mu0 = EmpiricalMeasure::dirac(&[1.0]).unwrap();
    let mut small = Vec::new();
    let mut large = Vec::new();
    for seed in 0..20 {
        let table = chaos_convergence(&model, &mu0, &[100, 10_000], &reference, &cfg(0, 0.05, 1.0, seed)).unwrap();
        small.push(table.rows[0].w2);
        large.push(table.rows[1].w2);
    }
    assert!(median(large.clone()) < median(small));
    let ratio = large[0] / large[1];
    assert!((1.0 / 3.0..=3.0).contains(&ratio), "seed instability {ratio}");
}

#[test]
fn chaos_without_diffusion_is_exact() {
    let degenerate = make_local(
        1,
        1,
        Arc::new(|_, x: &[f64], _, o: &mut [f64]| o[0] = -x[0]),
        Arc::new(|_, _, _, o: &mut [f64]| o[0] = 0.0),
    )
    .unwrap();
    let table = chaos_convergence(
        &degenerate,
        &EmpiricalMeasure::dirac(&[0.0]).unwrap(),
        &[10, 1000, 50_000],
        &Measure::dirac(&[0.0]).unwrap(),
        &cfg(0, 0.1, 1.0, 0),
    )
    .unwrap();
    assert!(table.rows.iter().all(|r| r.w2 == 0.0));
    assert!(table.acceptable());
}

#[test]
fn chaos_rejects_unsorted_counts() {
    let r = chaos_convergence(
        &frozen_zero(),
        &EmpiricalMeasure::dirac(&[0.0]).unwrap(),
        &[100, 10],
        &Measure::dirac(&[0.0]).unwrap(),
        &SimConfig::default(),
    );
    assert!(matches!(r, Err(Error::Usage(_))));
}

#[test]
fn exchangeability_is_bitwise() {
    let model = mean_field_ou(0.8).unwrap();
    let n = 200;
    let pts: Vec<f64> = (0..n).map(|i| ((i * 37 % 101) as f64 - 50.0) / 25.0).collect();
    let streams: Vec<u64> = (0..n as u64).collect();
    let perm: Vec<usize> = (0..n).map(|i| (i * 73 + 11) % n).collect();
    let c = cfg(n, 0.05, 1.0, 9);
    let a = euler_mv_streams(&model, &EmpiricalMeasure::uniform(1, pts.clone()).unwrap(), &streams, &c).unwrap();
    let pp: Vec<f64> = perm.iter().map(|&i| pts[i]).collect();
    let ps: Vec<u64> = perm.iter().map(|&i| streams[i]).collect();
    let b = euler_mv_streams(&model, &EmpiricalMeasure::uniform(1, pp).unwrap(), &ps, &c).unwrap();
    for k in 0..a.times().len() {
        let mut x = a.frame(k).to_vec();
        let mut y = b.frame(k).to_vec();
        for (j, &i) in perm.iter().enumerate() {
            assert_eq!(y[j].to_bits(), x[i].to_bits());
        }
        x.sort_by(f64::total_cmp);
        y.sort_by(f64::total_cmp);
        assert_eq!(x, y);
    }
}

#[test]
fn same_seed_same_ensemble() {
    let model = mean_field_ou(1.0).unwrap();
    let mu0 = EmpiricalMeasure::new(1, vec![0.0, 1.0, 3.0], vec![0.5, 0.25, 0.25]).unwrap();
    let a = euler_mv(&model, &mu0, &cfg(500, 0.02, 1.0, 42)).unwrap();
    let b = euler_mv(&model, &mu0, &cfg(500, 0.02, 1.0, 42)).unwrap();
    let c = euler_mv(&model, &mu0, &cfg(500, 0.02, 1.0, 43)).unwrap();
    assert_eq!(a.frames(), b.frames());
    assert_ne!(a.frames(), c.frames());
}

#[test]
fn euler_weak_order_one() {
    // OU from x = 1 with one Brownian path per particle shared across step
    // sizes; the error in E[X_1²] is measured against a fine-step run.
    let model = ornstein_uhlenbeck(1.0, 1.0).unwrap();
    let flow = dirac_flow(0.0, 0.0, 1.0);
    let fine = 1e-4;
    let n = 4000;
    let run = |dt: f64| {
        let c = SimConfig {
            particles: n,
            dt,
            horizon: 1.0,
            seed: 2024,
            record_every: 100_000,
            noise_refinement: (dt / fine).round() as usize,
        };
        let e = euler_decoupled(&model, &flow, 0.0, &[1.0], &c).unwrap();
        e.frame(e.times().len() - 1).to_vec()
    };
    let reference = run(fine);
    let dts: [f64; 7] = [0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001];
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for dt in dts {
        let x = run(dt);
        let err = x.iter().zip(&reference).map(|(a, b)| a * a - b * b).sum::<f64>() / n as f64;
        xs.push(dt.ln());
        ys.push(err.abs().ln());
    }
    let (slope, _) = linear_fit(&xs, &ys);
    assert!(slope >= 0.8, "weak order slope {slope}");
}

#[test]
fn binary_round_trip() {
    let run = euler_mv(&heat(1, 1.0).unwrap(), &EmpiricalMeasure::dirac(&[0.0]).unwrap(), &cfg(64, 0.1, 1.0, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ens.bin");
    run.write_binary(&path).unwrap();
    let back = ParticleEnsemble::read_binary(&path).unwrap();
    assert_eq!(back.frames(), run.frames());
    assert_eq!(back.times(), run.times());
    assert_eq!(back.seed(), 1);
    let csv = dir.path().join("ens.csv");
    run.write_csv(&csv, 8).unwrap();
    assert!(std::fs::read_to_string(csv).unwrap().lines().count() > 1);
}

#[test]
fn blow_up_reports_step() {
    let model = make_local(
        1,
        1,
        Arc::new(|t, _, _, o: &mut [f64]| o[0] = if t > 0.25 { f64::NAN } else { 0.0 }),
        Arc::new(|_, _, _, o: &mut [f64]| o[0] = 1.0),
    )
    .unwrap();
    let r = euler_mv(&model, &EmpiricalMeasure::dirac(&[0.0]).unwrap(), &cfg(10, 0.1, 1.0, 0));
    match r {
        Err(Error::Numeric { step, .. }) => assert_eq!(step, 4),
        other => panic!("expected a numeric error, got {other:?}"),
    }
}

#[test]
fn config_guards() {
    let mu0 = EmpiricalMeasure::dirac(&[0.0]).unwrap();
    let h = heat(1, 1.0).unwrap();
    for c in [cfg(1, 0.1, 1.0, 0), cfg(10, 0.0, 1.0, 0), cfg(10, 2.0, 1.0, 0)] {
        assert!(matches!(euler_mv(&h, &mu0, &c), Err(Error::Usage(_))));
    }
    let two = EmpiricalMeasure::dirac(&[0.0, 0.0]).unwrap();
    assert!(matches!(euler_mv(&h, &two, &cfg(10, 0.1, 1.0, 0)), Err(Error::Usage(_))));
    assert!(matches!(
        euler_decoupled(&h, &dirac_flow(0.0, 0.0, 0.5), 0.0, &[0.0], &cfg(10, 0.1, 1.0, 0)),
        Err(Error::Usage(_))
    ));
}
