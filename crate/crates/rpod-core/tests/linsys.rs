use faer::{c64, Mat};
use proptest::prelude::*;
use rpod_core::linsys::{classify_modes, eigendecompose, DEFAULT_CLASS_EPS, DEFAULT_COND_BOUND};
use rpod_core::{Error, Operator, StateSpaceSystem};

fn diag3() -> StateSpaceSystem {
    StateSpaceSystem::from_dense(
        Mat::from_fn(3, 3, |i, j| if i == j { [0.9, 0.5, 0.3][i] } else { 0.0 }),
        Mat::from_fn(3, 1, |i, _| [1.0, 1.0, 0.0][i]),
        Mat::from_fn(1, 3, |_, j| [1.0, 0.0, 1.0][j]),
    )
    .unwrap()
}

fn scalar(a: f64) -> StateSpaceSystem {
    StateSpaceSystem::from_dense(
        Mat::from_fn(1, 1, |_, _| a),
        Mat::from_fn(1, 1, |_, _| 1.0),
        Mat::from_fn(1, 1, |_, _| 1.0),
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

fn max_abs_c(m: &Mat<c64>) -> f64 {
    let mut v = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            v = v.max(m[(i, j)].norm());
        }
    }
    v
}

/// Random stable system: entries scaled so that the infinity norm of A is below `rho`.
fn random_system(n: usize, p: usize, q: usize, rho: f64, vals: &[f64]) -> StateSpaceSystem {
    let mut it = vals.iter().cycle();
    let mut a = Mat::from_fn(n, n, |_, _| *it.next().unwrap());
    let row_max = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if row_max > 0.0 {
        a = a * faer::Scale(rho / row_max);
    }
    let b = Mat::from_fn(n, p, |_, _| *it.next().unwrap());
    let c = Mat::from_fn(q, n, |_, _| *it.next().unwrap());
    StateSpaceSystem::from_dense(a, b, c).unwrap()
}

#[test]
fn diagonal_impulse_response_follows_powers() {
    let s = diag3();
    let mut u = Mat::zeros(1, 6);
    u[(0, 0)] = 1.0;
    let x = s.propagate(Mat::<f64>::zeros(3, 1).as_ref(), u.as_ref()).unwrap();
    for k in 0..6 {
        let expect = [0.9f64.powi(k as i32), 0.5f64.powi(k as i32), 0.0];
        for i in 0..3 {
            assert!((x[(i, k)] - expect[i]).abs() < 1e-15);
        }
    }
}

#[test]
fn zero_inputs_give_zero_trajectory() {
    let s = diag3();
    let x = s
        .propagate(Mat::<f64>::zeros(3, 1).as_ref(), Mat::<f64>::zeros(1, 10).as_ref())
        .unwrap();
    assert_eq!(max_abs(&x), 0.0);
}

#[test]
fn nilpotent_markov_parameters_vanish() {
    let a = Mat::from_fn(3, 3, |i, j| if j > i { 1.0 } else { 0.0 });
    let s = StateSpaceSystem::from_dense(a, Mat::from_fn(3, 1, |_, _| 1.0), Mat::from_fn(1, 3, |_, _| 1.0)).unwrap();
    let mk = s.markov_parameters(5);
    assert!(mk[0][(0, 0)] != 0.0);
    for m in &mk[2..] {
        assert_eq!(m[(0, 0)], 0.0);
    }
}

#[test]
fn diagonal_markov_parameters_only_see_the_coupled_mode() {
    let mk = diag3().markov_parameters(12);
    for (i, m) in mk.iter().enumerate() {
        assert!((m[(0, 0)] - 0.9f64.powi(i as i32 + 1)).abs() < 1e-15);
    }
}

#[test]
fn shift_matrix_adjoint_is_transpose() {
    let a = Mat::from_fn(2, 2, |i, j| if (i, j) == (0, 1) { 1.0 } else { 0.0 });
    let s = StateSpaceSystem::from_dense(a, Mat::from_fn(2, 1, |_, _| 1.0), Mat::from_fn(1, 2, |_, _| 1.0)).unwrap();
    let at = s.adjoint().a().to_dense();
    assert_eq!(at[(1, 0)], 1.0);
    assert_eq!(at[(0, 1)], 0.0);
}

#[test]
fn symmetric_self_adjoint_system() {
    let a = Mat::from_fn(3, 3, |i, j| 0.1 * (1.0 + (i + j) as f64));
    let b = Mat::from_fn(3, 2, |i, j| (i * 2 + j) as f64);
    let s = StateSpaceSystem::from_dense(a, b.clone(), b.transpose().to_owned()).unwrap();
    let adj = s.adjoint();
    assert_eq!(adj.a().to_dense(), s.a().to_dense());
    assert_eq!(adj.b().to_dense(), s.b().to_dense());
    assert_eq!(adj.c().to_dense(), s.c().to_dense());
}

#[test]
fn rotation_block_eigenpair() {
    let a = Mat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 1) => 0.8,
        (1, 0) => -0.8,
        _ => 0.0,
    });
    let d = eigendecompose(a.as_ref(), DEFAULT_COND_BOUND).unwrap();
    assert!((d.eigenvalues[0] - c64::new(0.0, -0.8)).norm() < 1e-14);
    assert!((d.eigenvalues[1] - c64::new(0.0, 0.8)).norm() < 1e-14);
    let g = d.left.adjoint() * &d.right;
    let eye = Mat::<c64>::identity(2, 2);
    assert!(max_abs_c(&(g - eye)) < 1e-10);
}

#[test]
fn scaled_identity_and_diagonal_decompositions() {
    let d = eigendecompose(Mat::<f64>::identity(2, 2).as_ref(), DEFAULT_COND_BOUND).unwrap();
    assert!(d.eigenvalues.iter().all(|l| (l - c64::new(1.0, 0.0)).norm() < 1e-15));
    let d = diag3().eigendecompose().unwrap();
    let expect = [0.9, 0.5, 0.3];
    for (l, e) in d.eigenvalues.iter().zip(expect) {
        assert!((l.re - e).abs() < 1e-15 && l.im == 0.0);
    }
}

#[test]
fn classification_of_the_diagonal_example() {
    let s = diag3();
    let d = s.eigendecompose().unwrap();
    let p = classify_modes(&s, &d, DEFAULT_CLASS_EPS).unwrap();
    assert_eq!(p.controllable_observable, vec![0]);
    assert_eq!(p.controllable_unobservable, vec![1]);
    assert_eq!(p.uncontrollable_observable, vec![2]);
    assert!(p.uncontrollable_unobservable.is_empty());
}

#[test]
fn full_actuation_and_zero_input_classification() {
    let n = 4;
    let a = Mat::from_fn(n, n, |i, j| if i == j { 0.2 + 0.1 * i as f64 } else { 0.01 });
    let full = StateSpaceSystem::from_dense(
        a.clone(),
        Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.3 }),
        Mat::identity(n, n),
    )
    .unwrap();
    let d = full.eigendecompose().unwrap();
    assert_eq!(
        classify_modes(&full, &d, DEFAULT_CLASS_EPS)
            .unwrap()
            .controllable_observable
            .len(),
        n
    );
    let dead = StateSpaceSystem::from_dense(a, Mat::zeros(n, 1), Mat::identity(n, n)).unwrap();
    let p = classify_modes(&dead, &d, DEFAULT_CLASS_EPS).unwrap();
    assert_eq!(p.uncontrollable_observable.len(), n);
}

#[test]
fn scalar_resolvent_at_dc_and_nyquist() {
    let s = scalar(0.5);
    assert!((s.transfer_function(0.0).unwrap()[(0, 0)] - c64::new(2.0, 0.0)).norm() < 1e-15);
    let h = s.transfer_function(std::f64::consts::PI).unwrap()[(0, 0)];
    assert!((h - c64::new(-2.0 / 3.0, 0.0)).norm() < 1e-15);
}

#[test]
fn diagonal_example_dc_gain() {
    // only the mode at 0.9 couples input to output: 1 / (1 - 0.9)
    let h = diag3().transfer_function(0.0).unwrap()[(0, 0)];
    assert!((h - c64::new(10.0, 0.0)).norm() < 1e-12);
}

#[test]
fn jordan_block_is_reported_as_near_defective() {
    let a = Mat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 0) | (1, 1) => 0.5,
        (0, 1) => 1.0,
        _ => 0.0,
    });
    let e = eigendecompose(a.as_ref(), DEFAULT_COND_BOUND).unwrap_err();
    assert!(matches!(e, Error::NearDefective { .. }), "{e}");
}

#[test]
fn sparse_and_dense_propagation_agree() {
    let trips = [(0, 0, 0.5), (1, 0, 0.2), (1, 1, 0.4), (2, 1, 0.1), (2, 2, 0.3)];
    let sparse = Operator::from_triplets(3, &trips).unwrap();
    let dense = Operator::Dense(sparse.to_dense());
    let b = Mat::from_fn(3, 1, |i, _| 1.0 + i as f64);
    let c = Mat::from_fn(2, 3, |i, j| (i + j) as f64);
    let s1 = StateSpaceSystem::new(
        sparse,
        rpod_core::InputMap::dense(b.clone()),
        rpod_core::OutputMap::dense(c.clone()),
    )
    .unwrap();
    let s2 = StateSpaceSystem::new(dense, rpod_core::InputMap::dense(b), rpod_core::OutputMap::dense(c)).unwrap();
    let u = Mat::from_fn(1, 8, |_, k| (k as f64).sin());
    let x0 = Mat::zeros(3, 1);
    let y1 = s1.simulate_outputs(x0.as_ref(), u.as_ref()).unwrap();
    let y2 = s2.simulate_outputs(x0.as_ref(), u.as_ref()).unwrap();
    assert!(max_abs(&(y1 - y2)) < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adjoint_markov_parameters_are_transposes(
        n in 2usize..8, p in 1usize..4, q in 1usize..4,
        vals in prop::collection::vec(-1.0f64..1.0, 30..60),
    ) {
        let s = random_system(n, p, q, 0.9, &vals);
        let prim = s.markov_parameters(10);
        let adj = s.adjoint().markov_parameters(10);
        for (a, b) in prim.iter().zip(&adj) {
            let d = a.transpose().to_owned() - b;
            prop_assert!(max_abs(&d) <= 1e-12);
        }
    }

    #[test]
    fn adjoint_is_an_involution(
        n in 1usize..7, vals in prop::collection::vec(-1.0f64..1.0, 20..40),
    ) {
        let s = random_system(n, 2, 3, 0.8, &vals);
        prop_assert_eq!(s.adjoint().adjoint(), s);
    }

    #[test]
    fn eigendecomposition_is_biorthogonal_and_reconstructs(
        n in 1usize..12, vals in prop::collection::vec(-1.0f64..1.0, 30..80),
    ) {
        let s = random_system(n, 1, 1, 0.95, &vals);
        let a = s.a().to_dense();
        let d = match s.eigendecompose() {
            Ok(d) => d,
            Err(Error::NearDefective { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let g = d.left.adjoint() * &d.right;
        prop_assert!(max_abs_c(&(g - Mat::<c64>::identity(n, n))) <= 1e-10);
        let anorm = max_abs(&a).max(1e-300);
        let rec = d.reconstruct();
        let err = (0..n).flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (rec[(i, j)] - c64::new(a[(i, j)], 0.0)).norm())
            .fold(0.0, f64::max);
        prop_assert!(err <= 1e-8 * anorm * n as f64);
        // conjugate pairs: the spectrum equals its own conjugate
        for l in &d.eigenvalues {
            prop_assert!(d.eigenvalues.iter().any(|m| (m - l.conj()).norm() < 1e-8));
        }
    }

    #[test]
    fn resolvent_matches_neumann_series(
        n in 1usize..10, omega in 0.0f64..3.14,
        vals in prop::collection::vec(-1.0f64..1.0, 30..80),
    ) {
        let s = random_system(n, 2, 2, 0.7, &vals);
        let h = s.transfer_function(omega).unwrap();
        // sum_{i>=0} z^{-(i+1)} C A^i B with ||A^K|| <= 0.7^K
        let z_inv = c64::new(omega.cos(), -omega.sin());
        let mut acc = Mat::<c64>::zeros(2, 2);
        let mut w = s.b().to_dense();
        let mut zpow = z_inv;
        for _ in 0..100 {
            let cw = s.c().apply(w.as_ref());
            for i in 0..2 {
                for j in 0..2 {
                    acc[(i, j)] += zpow * cw[(i, j)];
                }
            }
            w = s.a().apply(w.as_ref());
            zpow *= z_inv;
        }
        prop_assert!(max_abs_c(&(h - acc)) <= 1e-8);
    }

    #[test]
    fn classification_ignores_input_scaling(
        n in 2usize..8, scale in 1e-3f64..1e3,
        vals in prop::collection::vec(-1.0f64..1.0, 30..60),
    ) {
        let s = random_system(n, 2, 2, 0.9, &vals);
        let d = match s.eigendecompose() {
            Ok(d) => d,
            Err(_) => return Ok(()),
        };
        let scaled = StateSpaceSystem::from_dense(
            s.a().to_dense(),
            s.b().to_dense() * faer::Scale(scale),
            s.c().to_dense(),
        ).unwrap();
        let p1 = classify_modes(&s, &d, DEFAULT_CLASS_EPS).unwrap();
        let p2 = classify_modes(&scaled, &d, DEFAULT_CLASS_EPS).unwrap();
        prop_assert_eq!(p1.controllable_observable, p2.controllable_observable);
        prop_assert_eq!(p1.controllable_unobservable, p2.controllable_unobservable);
        prop_assert_eq!(p1.uncontrollable_observable, p2.uncontrollable_observable);
        prop_assert_eq!(p1.uncontrollable_unobservable, p2.uncontrollable_unobservable);
    }
}
