use mvflow::measures::{
    d_eta, io, kde, l1_density_distance, wasserstein2, wasserstein2_with_method, Bandwidth, DensityGrid,
    EmpiricalMeasure, GridSpec, Measure, MeasureFlow, TimeGrid, TransportMethod,
};
use mvflow::numeric::normal_cdf;
use mvflow::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

fn dirac(x: f64) -> EmpiricalMeasure<f64> {
    EmpiricalMeasure::dirac(&[x]).unwrap()
}

fn normal_grid(mean: f64, sd: f64, lo: f64, hi: f64, cells: usize) -> DensityGrid<f64> {
    let spec = GridSpec::line(lo, hi, cells).unwrap();
    DensityGrid::from_fn(&spec, |z| {
        let u = (z[0] - mean) / sd;
        (-0.5 * u * u).exp() / (sd * std::f64::consts::TAU.sqrt())
    })
    .unwrap()
}

#[test]
fn wasserstein2_reference_values() {
    assert_eq!(wasserstein2(&dirac(0.0), &dirac(2.0)).unwrap(), 2.0);
    let m = EmpiricalMeasure::uniform(1, vec![0.3, -1.0, 2.0]).unwrap();
    assert_eq!(wasserstein2(&m, &m).unwrap(), 0.0);
    let a = EmpiricalMeasure::uniform(1, vec![0.0, 1.0]).unwrap();
    let b = EmpiricalMeasure::uniform(1, vec![1.0, 2.0]).unwrap();
    assert!((wasserstein2(&a, &b).unwrap() - 1.0f64).abs() < 1e-15);
}

#[test]
fn wasserstein2_dimension_mismatch_is_usage_error() {
    let a = dirac(0.0);
    let b = EmpiricalMeasure::dirac(&[0.0, 0.0]).unwrap();
    assert!(matches!(wasserstein2(&a, &b), Err(Error::Usage(_))));
}

#[test]
fn wasserstein2_splits_unequal_weights() {
    // Oracle: mass 1/2 at 0 must split between 0 (1/4) and 1 (1/4 of ν's 3/4 atom).
    let mu = EmpiricalMeasure::new(1, vec![0.0, 2.0], vec![0.5, 0.5]).unwrap();
    let nu = EmpiricalMeasure::new(1, vec![0.0, 1.0], vec![0.25, 0.75]).unwrap();
    let expect = (0.25 * 1.0 + 0.5 * 1.0f64).sqrt();
    assert!((wasserstein2(&mu, &nu).unwrap() - expect).abs() < 1e-15);
}

#[test]
fn wasserstein2_two_dimensional_exact_lp() {
    let a = EmpiricalMeasure::uniform(2, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
    let b = EmpiricalMeasure::uniform(2, vec![0.0, 1.0, 1.0, 1.0]).unwrap();
    let (w, method) = wasserstein2_with_method(&a, &b).unwrap();
    assert_eq!(method, TransportMethod::ExactLp);
    assert!((w - 1.0f64).abs() < 1e-12);
}

#[test]
fn wasserstein2_large_two_dimensional_falls_back_to_entropic() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let pts: Vec<f64> = (0..2 * 120).map(|_| StandardNormal.sample(&mut rng)).collect();
    let a = EmpiricalMeasure::uniform(2, pts.clone()).unwrap();
    let shifted: Vec<f64> = pts.iter().enumerate().map(|(i, v)| if i % 2 == 0 { v + 0.5 } else { *v }).collect();
    let b = EmpiricalMeasure::uniform(2, shifted).unwrap();
    let (w, method) = wasserstein2_with_method(&a, &b).unwrap();
    let TransportMethod::Entropic { epsilon } = method else {
        panic!("expected the entropic fallback");
    };
    // A pure translation by 0.5 is optimal: W2 = 0.5.
    let declared = (0.25 + epsilon * (120.0f64 * 120.0).ln()).sqrt();
    assert!(w >= 0.5 - 1e-6 && w <= declared + 1e-9, "w={w}");
}

#[test]
fn l1_distance_reference_values() {
    let p = normal_grid(0.0, 1.0, -8.0, 8.0, 2048);
    assert_eq!(l1_density_distance(&p, &p).unwrap(), 0.0);
    let q = normal_grid(0.1, 1.0, -8.0, 8.0, 2048);
    let oracle = 2.0 * (2.0 * normal_cdf(0.05) - 1.0);
    let got = l1_density_distance(&p, &q).unwrap();
    assert!((got - oracle).abs() < 1e-6, "{got} vs {oracle}");
    assert!((oracle - 0.0797).abs() < 1e-4);

    let spec = GridSpec::line(0.0, 4.0, 4).unwrap();
    let left = DensityGrid::from_spec(&spec, vec![0.5, 1.0, 0.5, 0.0, 0.0]).unwrap();
    let right = DensityGrid::from_spec(&spec, vec![0.0, 0.0, 0.5, 1.0, 0.5]).unwrap();
    // Trapezoid mass 7/4 each; after normalizing the overlap node cancels, leaving 10/7.
    let l = l1_density_distance(&left.normalized().unwrap(), &right.normalized().unwrap()).unwrap();
    assert!((l - 10.0f64 / 7.0).abs() < 1e-12);
}

#[test]
fn l1_distance_of_disjoint_supports_is_two() {
    let spec = GridSpec::line(0.0, 6.0, 6).unwrap();
    let p = DensityGrid::from_spec(&spec, vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let q = DensityGrid::from_spec(&spec, vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
    assert!((l1_density_distance(&p, &q).unwrap() - 2.0f64).abs() < 1e-15);
}

#[test]
fn l1_distance_grid_mismatch_is_usage_error() {
    let p = normal_grid(0.0, 1.0, -8.0, 8.0, 64);
    let q = normal_grid(0.0, 1.0, -8.0, 8.0, 128);
    assert!(matches!(l1_density_distance(&p, &q), Err(Error::Usage(_))));
}

#[test]
fn d_eta_reference_values() {
    let m = EmpiricalMeasure::uniform(1, vec![0.0, 0.4]).unwrap();
    assert_eq!(d_eta(&m, &m, 0.7).unwrap(), 0.0);
    assert!((d_eta(&dirac(0.0), &dirac(2.0), 1.0).unwrap() - 1.0).abs() < 1e-15);
    assert!((d_eta(&dirac(0.0), &dirac(0.25), 0.5).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn d_eta_over_budget_is_resource_error() {
    let a = EmpiricalMeasure::uniform(1, (0..101).map(|i| i as f64).collect()).unwrap();
    let b = EmpiricalMeasure::uniform(1, (0..100).map(|i| i as f64).collect()).unwrap();
    assert!(matches!(d_eta(&a, &b, 1.0), Err(Error::Resource(_))));
}

#[test]
fn moment2_reference_values() {
    assert_eq!(dirac(3.0).moment2(), 9.0);
    assert_eq!(EmpiricalMeasure::uniform(1, vec![-1.0, 1.0]).unwrap().moment2(), 1.0);
    let g = normal_grid(0.0, 1.0, -8.0, 8.0, 2048);
    assert!((g.moment2() - 1.0).abs() < 1e-4);
}

#[test]
fn kde_of_single_particle_is_the_kernel() {
    let h = 0.3;
    let spec = GridSpec::centered(0.0, 4.0, 400).unwrap();
    let g = kde(&dirac(0.0), &spec, &Bandwidth::Fixed(vec![h])).unwrap();
    let exact = normal_grid(0.0, h, -4.0, 4.0, 400);
    for (a, b) in g.values().iter().zip(exact.values()) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn kde_of_symmetric_pair_is_even() {
    let m = EmpiricalMeasure::uniform(1, vec![-0.7, 0.7]).unwrap();
    let spec = GridSpec::centered(0.0, 4.0, 256).unwrap();
    let g = kde(&m, &spec, &Bandwidth::Fixed(vec![0.25])).unwrap();
    let v = g.values();
    for i in 0..v.len() {
        assert!((v[i] - v[v.len() - 1 - i]).abs() < 1e-14);
    }
}

#[test]
fn kde_of_normal_sample_is_close_to_normal() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let pts: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let m = EmpiricalMeasure::uniform(1, pts).unwrap();
    let spec = GridSpec::centered(0.0, 8.0, 1024).unwrap();
    let g = kde(&m, &spec, &Bandwidth::Silverman).unwrap();
    let exact = normal_grid(0.0, 1.0, -8.0, 8.0, 1024);
    assert!((g.mass() - 1.0).abs() < 1e-12);
    assert!(l1_density_distance(&g, &exact).unwrap() <= 0.05);
}

#[test]
fn kde_of_empty_input_rejected_and_bandwidth_checked() {
    let spec = GridSpec::centered(0.0, 1.0, 8).unwrap();
    assert!(matches!(kde(&dirac(0.0), &spec, &Bandwidth::Fixed(vec![1.0, 2.0, 3.0])), Err(Error::Usage(_))));
    assert!(EmpiricalMeasure::<f64>::uniform(1, vec![]).is_err());
}

#[test]
fn grid_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = normal_grid(0.2, 0.7, -5.0, 5.0, 64);
    let path = dir.path().join("g.csv");
    io::write_grid(&path, &g).unwrap();
    let back = io::read_grid(&path).unwrap();
    assert_eq!(back, g);

    let m = EmpiricalMeasure::new(2, vec![0.1, 0.2, -3.0, 1e-9], vec![0.25, 0.75]).unwrap();
    let p = dir.path().join("m.csv");
    io::write_empirical(&p, &m).unwrap();
    assert_eq!(io::read_empirical(&p).unwrap(), m);
}

#[test]
fn flow_interpolates_between_nodes() {
    let a = Measure::Grid(normal_grid(0.0, 1.0, -8.0, 8.0, 64));
    let b = Measure::Grid(normal_grid(1.0, 1.0, -8.0, 8.0, 64));
    let flow = MeasureFlow::new(TimeGrid::new(vec![0.0, 1.0]).unwrap(), vec![a.clone(), b]).unwrap();
    let mid = flow.law_at(0.25).unwrap();
    assert!((mid.mean()[0] - 0.25).abs() < 1e-9);
    assert!(matches!(flow.law_at(1.5), Err(Error::Usage(_))));
    assert_eq!(flow.initial(), &a);
}

#[test]
fn flow_rejects_mixed_representations() {
    let a = Measure::Grid(normal_grid(0.0, 1.0, -8.0, 8.0, 64));
    let b = Measure::Empirical(dirac(0.0));
    assert!(MeasureFlow::new(TimeGrid::new(vec![0.0, 1.0]).unwrap(), vec![a, b]).is_err());
}

fn cloud() -> impl Strategy<Value = EmpiricalMeasure<f64>> {
    (1usize..8).prop_flat_map(|n| {
        (prop::collection::vec(-3.0f64..3.0, n), prop::collection::vec(0.05f64..1.0, n)).prop_map(|(p, w)| {
            let s: f64 = w.iter().sum();
            let mut w: Vec<f64> = w.iter().map(|v| v / s).collect();
            let rest: f64 = w[1..].iter().sum();
            w[0] = 1.0 - rest;
            EmpiricalMeasure::new(1, p, w).unwrap()
        })
    })
}

fn cloud2() -> impl Strategy<Value = EmpiricalMeasure<f64>> {
    (1usize..6).prop_flat_map(|n| prop::collection::vec(-2.0f64..2.0, 2 * n).prop_map(|p| EmpiricalMeasure::uniform(2, p).unwrap()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn w2_triangle_inequality(a in cloud(), b in cloud(), c in cloud()) {
        let ab = wasserstein2(&a, &b).unwrap();
        let bc = wasserstein2(&b, &c).unwrap();
        let ac = wasserstein2(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn w2_triangle_inequality_2d(a in cloud2(), b in cloud2(), c in cloud2()) {
        let ab = wasserstein2(&a, &b).unwrap();
        let bc = wasserstein2(&b, &c).unwrap();
        let ac = wasserstein2(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn d_eta_triangle_inequality_and_bound(a in cloud(), b in cloud(), c in cloud(), eta in 0.1f64..1.0) {
        let ab = d_eta(&a, &b, eta).unwrap();
        let bc = d_eta(&b, &c, eta).unwrap();
        let ac = d_eta(&a, &c, eta).unwrap();
        prop_assert!(ac <= ab + bc + 1e-9);
        prop_assert!(ab <= 1.0 + 1e-12);
    }

    #[test]
    fn w2_is_permutation_invariant(a in cloud(), b in cloud(), seed in 0u64..1000) {
        use rand::seq::SliceRandom;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..a.len()).collect();
        perm.shuffle(&mut rng);
        prop_assert_eq!(wasserstein2(&a, &b).unwrap(), wasserstein2(&a.permuted(&perm), &b).unwrap());
    }

    #[test]
    fn l1_distance_of_normalized_grids_is_at_most_two(m1 in -2.0f64..2.0, m2 in -2.0f64..2.0, s1 in 0.2f64..2.0, s2 in 0.2f64..2.0) {
        let p = normal_grid(m1, s1, -10.0, 10.0, 256).normalized().unwrap();
        let q = normal_grid(m2, s2, -10.0, 10.0, 256).normalized().unwrap();
        prop_assert!(l1_density_distance(&p, &q).unwrap() <= 2.0 + 1e-12);
    }
}
