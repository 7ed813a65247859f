use faer::Mat;
use proptest::prelude::*;
use rpod_core::discretize::{build_heat_1d, HeatConfig};
use rpod_core::snapshots::{
    check_snapshot_sufficiency, estimate_settling_time, impulse_ensemble_adjoint, impulse_ensemble_primal,
    noise_ensemble, noise_ensemble_adjoint, noise_inputs, NoiseSpec, SettlingOptions,
};
use rpod_core::synthetic::{generate, SyntheticConfig};
use rpod_core::StateSpaceSystem;

fn scalar(a: f64, b: f64) -> StateSpaceSystem {
    StateSpaceSystem::from_dense(
        Mat::from_fn(1, 1, |_, _| a),
        Mat::from_fn(1, 1, |_, _| b),
        Mat::from_fn(1, 1, |_, _| 1.0),
    )
    .unwrap()
}

fn diag3() -> StateSpaceSystem {
    StateSpaceSystem::from_dense(
        Mat::from_fn(3, 3, |i, j| if i == j { [0.9, 0.5, 0.3][i] } else { 0.0 }),
        Mat::from_fn(3, 1, |i, _| [1.0, 1.0, 0.0][i]),
        Mat::from_fn(1, 3, |_, j| [1.0, 0.0, 1.0][j]),
    )
    .unwrap()
}

fn max_abs(m: &Mat<f64>) -> f64 {
    let mut v = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            v = v.max(m[(i, j)].abs());
        }
    }
    v
}

#[test]
fn scalar_impulse_snapshots() {
    let x = impulse_ensemble_primal(&scalar(0.5, 1.0), &[1, 2]).unwrap();
    assert_eq!(x.columns[(0, 0)], 0.5);
    assert_eq!(x.columns[(0, 1)], 0.25);
    let z = impulse_ensemble_adjoint(&scalar(0.5, 1.0), &[1, 2, 3]).unwrap();
    assert_eq!(z.columns[(0, 2)], 0.125);
}

#[test]
fn single_time_gives_a_times_b() {
    let a = Mat::from_fn(2, 2, |i, j| 0.1 * (1 + i + 2 * j) as f64);
    let b = Mat::from_fn(2, 2, |i, j| (i + j) as f64 + 1.0);
    let s = StateSpaceSystem::from_dense(a.clone(), b.clone(), Mat::identity(2, 2)).unwrap();
    let x = impulse_ensemble_primal(&s, &[1]).unwrap();
    assert_eq!(x.columns, &a * &b);
}

#[test]
fn diagonal_adjoint_snapshots() {
    let s = StateSpaceSystem::from_dense(
        Mat::from_fn(2, 2, |i, j| if i == j { [0.5, 0.4][i] } else { 0.0 }),
        Mat::from_fn(2, 1, |_, _| 1.0),
        Mat::identity(2, 2),
    )
    .unwrap();
    let z = impulse_ensemble_adjoint(&s, &[1]).unwrap().columns;
    assert_eq!(z, Mat::from_fn(2, 2, |i, j| if i == j { [0.5, 0.4][i] } else { 0.0 }));
}

#[test]
fn adjoint_snapshots_match_dense_powers() {
    let s = diag3();
    let z = impulse_ensemble_adjoint(&s, &[1, 2]).unwrap().columns;
    let at = s.a().to_dense().transpose().to_owned();
    let ct = s.c().to_dense().transpose().to_owned();
    let z1 = &at * &ct;
    let z2 = &at * &z1;
    assert!(max_abs(&(z.subcols(0, 1).to_owned() - z1)) < 1e-15);
    assert!(max_abs(&(z.subcols(1, 1).to_owned() - z2)) < 1e-15);
}

#[test]
fn heat_impulse_ensemble_shape() {
    let s = build_heat_1d(&HeatConfig::default()).unwrap();
    let times: Vec<usize> = (0..400).collect();
    let x = impulse_ensemble_primal(&s, &times).unwrap();
    assert_eq!((x.columns.nrows(), x.columns.ncols()), (100, 800));
    // time-major: both inputs at t = 0 first
    assert_eq!(x.columns.col(0).to_owned(), s.b().to_dense().col(0).to_owned());
    assert_eq!(x.columns.col(1).to_owned(), s.b().to_dense().col(1).to_owned());
}

#[test]
fn noise_snapshots_are_the_convolution_of_the_drawn_inputs() {
    let spec = NoiseSpec::new(3, 1, 42);
    let x = noise_ensemble(&scalar(0.5, 1.0), &spec).unwrap().columns;
    let u = noise_inputs(1, &spec);
    for k in 1..=3 {
        let expect: f64 = (1..=k).map(|i| 0.5f64.powi((k - i) as i32) * u[(0, i - 1)]).sum();
        assert!((x[(0, k - 1)] - expect).abs() < 1e-15);
    }
}

#[test]
fn zero_input_map_gives_zero_snapshots() {
    let x = noise_ensemble(&scalar(0.5, 0.0), &NoiseSpec::new(5, 2, 1)).unwrap();
    assert_eq!(max_abs(&x.columns), 0.0);
}

#[test]
fn heat_noise_ensemble_shape() {
    let s = build_heat_1d(&HeatConfig::default()).unwrap();
    let x = noise_ensemble(&s, &NoiseSpec::new(80, 40, 0)).unwrap();
    assert_eq!((x.columns.nrows(), x.columns.ncols()), (100, 80));
}

#[test]
fn identical_seeds_give_bitwise_identical_ensembles() {
    let s = build_heat_1d(&HeatConfig::default()).unwrap();
    let spec = NoiseSpec::new(20, 7, 9);
    let a = noise_ensemble(&s, &spec).unwrap().columns;
    let b = noise_ensemble(&s, &spec).unwrap().columns;
    assert_eq!(a, b);
    let c = noise_ensemble(&s, &spec.clone().with_stream(1)).unwrap().columns;
    assert_ne!(a, c);
}

#[test]
fn heat_settling_time_order_of_magnitude() {
    let s = build_heat_1d(&HeatConfig::default()).unwrap();
    let est = estimate_settling_time(&s, &SettlingOptions::default()).unwrap();
    assert!(est.decay <= 1e-3);
    assert!((300..=30_000).contains(&est.steps), "{}", est.steps);
}

#[test]
fn unstable_system_fails_to_settle() {
    let opts = SettlingOptions {
        max_steps: 1 << 10,
        ..SettlingOptions::default()
    };
    assert!(estimate_settling_time(&scalar(1.01, 1.0), &opts).is_err());
}

#[test]
fn sufficiency_on_rank_deficient_and_single_columns() {
    let x = Mat::from_fn(3, 2, |i, j| if i == j { 1.0 } else { 0.0 });
    let z = Mat::from_fn(3, 2, |i, _| if i == 0 { 1.0 } else { 0.0 });
    let r = check_snapshot_sufficiency(x.as_ref(), z.as_ref(), 1e-10).unwrap();
    assert_eq!(r.rank, 1);
    assert!(r.sufficient);
    let one = Mat::from_fn(3, 1, |i, _| i as f64 + 1.0);
    let r = check_snapshot_sufficiency(one.as_ref(), one.as_ref(), 1e-10).unwrap();
    assert!(!r.sufficient);
    assert_eq!(r.suggestion, Some((2, 2)));
}

#[test]
fn diagonal_example_noise_hankel_has_rank_one() {
    let s = diag3();
    let x = noise_ensemble(&s, &NoiseSpec::new(3, 2, 5)).unwrap().columns;
    let z = noise_ensemble_adjoint(&s, &NoiseSpec::new(3, 2, 5).with_stream(1))
        .unwrap()
        .columns;
    let r = check_snapshot_sufficiency(x.as_ref(), z.as_ref(), 1e-10).unwrap();
    assert_eq!(r.rank, 1);
    // oracle: the 3x3 product computed entrywise
    let mut h = Mat::<f64>::zeros(3, 3);
    for i in 0..3 {
        for j in 0..3 {
            h[(i, j)] = (0..3).map(|k| z[(k, i)] * x[(k, j)]).sum();
        }
    }
    let sv = h.singular_values().unwrap();
    assert!(sv[1] <= 1e-10 * sv[0]);
    assert!((sv[0] - r.singular_values[0]).abs() <= 1e-12 * sv[0]);
}

#[test]
fn rank_equals_order_with_matching_snapshot_counts() {
    for seed in 0..20 {
        let s = generate(&SyntheticConfig {
            seed,
            ..Default::default()
        })
        .unwrap();
        let l = s.config.order;
        let x = noise_ensemble(&s.system, &NoiseSpec::new(l, 10, seed)).unwrap().columns;
        let z = noise_ensemble_adjoint(&s.system, &NoiseSpec::new(l, 10, seed).with_stream(1))
            .unwrap()
            .columns;
        let r = check_snapshot_sufficiency(x.as_ref(), z.as_ref(), 1e-10).unwrap();
        assert_eq!(r.rank, l, "seed {seed}");
    }
}

/// Residual of projecting the columns of `x` on the range of `basis`.
fn projection_residual(basis: &Mat<f64>, x: &Mat<f64>) -> f64 {
    let svd = basis.thin_svd().unwrap();
    let s = svd.S().column_vector();
    let keep = (0..s.nrows()).filter(|&i| s[i] > 1e-12 * s[0]).count();
    let u = svd.U().subcols(0, keep);
    let proj = u * (u.transpose() * x);
    let r = x - proj;
    r.norm_l2() / x.norm_l2()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn noise_snapshots_lie_in_the_impulse_range(
        seed in 0u64..1000, count in 1usize..5, spacing in 1usize..4,
        vals in prop::collection::vec(-1.0f64..1.0, 30..60),
    ) {
        let n = 30;
        let mut it = vals.iter().cycle();
        let a = Mat::from_fn(n, n, |_, _| 0.15 * *it.next().unwrap());
        let b = Mat::from_fn(n, 1, |_, _| *it.next().unwrap());
        let s = StateSpaceSystem::from_dense(a, b, Mat::identity(n, n)).unwrap();
        let x = noise_ensemble(&s, &NoiseSpec::new(count, spacing, seed)).unwrap().columns;
        let times: Vec<usize> = (0..count * spacing).collect();
        let full = impulse_ensemble_primal(&s, &times).unwrap().columns;
        prop_assert!(projection_residual(&full, &x) <= 1e-8);
    }
}
