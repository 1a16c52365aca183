use faer::Mat;
use opidmd_core::batch::{exact_dmd, least_squares_dmd, ridge_dmd};
use opidmd_core::online::{online_dmd_fit, OnlineState, RlsState};
use opidmd_core::prox::{
    apply_prox, nuclear_norm, project_circulant, project_symmetric, project_tridiagonal, project_upper_triangular,
    prox_l1, prox_nuclear, ConstraintSpec, StepRule,
};
use opidmd_core::snapshots::{add_noise, build_pairs, NoiseSpec, SnapshotMatrix};
use opidmd_core::spectral::{decompose, predict, r_squared};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Mat<f64> {
    Mat::from_fn(n, m, |_, _| StandardNormal.sample(rng))
}

fn square() -> impl Strategy<Value = Mat<f64>> {
    (1usize..7).prop_flat_map(|n| {
        prop::collection::vec(-10.0f64..10.0, n * n).prop_map(move |v| Mat::from_fn(n, n, |i, j| v[i * n + j]))
    })
}

fn square_pair() -> impl Strategy<Value = (Mat<f64>, Mat<f64>)> {
    (1usize..7).prop_flat_map(|n| {
        (prop::collection::vec(-10.0f64..10.0, n * n), prop::collection::vec(-10.0f64..10.0, n * n)).prop_map(
            move |(a, b)| (Mat::from_fn(n, n, |i, j| a[i * n + j]), Mat::from_fn(n, n, |i, j| b[i * n + j])),
        )
    })
}

fn every_spec() -> Vec<ConstraintSpec> {
    vec![
        ConstraintSpec::Unconstrained,
        ConstraintSpec::L1 { lambda: 0.7 },
        ConstraintSpec::L2 { lambda: 0.7 },
        ConstraintSpec::Nuclear { lambda: 0.7 },
        ConstraintSpec::Symmetric,
        ConstraintSpec::Circulant,
        ConstraintSpec::UpperTriangular,
        ConstraintSpec::Tridiagonal,
    ]
}

fn max_diff(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    m
}

proptest! {
    #[test]
    fn projections_are_idempotent(a in square()) {
        let t = project_tridiagonal(a.as_ref()).unwrap();
        prop_assert_eq!(&project_tridiagonal(t.as_ref()).unwrap(), &t);
        let u = project_upper_triangular(a.as_ref()).unwrap();
        prop_assert_eq!(&project_upper_triangular(u.as_ref()).unwrap(), &u);
        let s = project_symmetric(a.as_ref()).unwrap();
        prop_assert!(max_diff(&project_symmetric(s.as_ref()).unwrap(), &s) <= 1e-12);
        let c = project_circulant(a.as_ref()).unwrap();
        prop_assert!(max_diff(&project_circulant(c.as_ref()).unwrap(), &c) <= 1e-12);
    }

    #[test]
    fn structural_outputs_are_members(a in square()) {
        let n = a.nrows();
        let s = project_symmetric(a.as_ref()).unwrap();
        let c = project_circulant(a.as_ref()).unwrap();
        let u = project_upper_triangular(a.as_ref()).unwrap();
        let t = project_tridiagonal(a.as_ref()).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(s[(i, j)], s[(j, i)]);
                prop_assert_eq!(c[(i, j)], c[((i + 1) % n, (j + 1) % n)]);
                if i > j {
                    prop_assert_eq!(u[(i, j)], 0.0);
                }
                if i.abs_diff(j) > 1 {
                    prop_assert_eq!(t[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn prox_operators_are_nonexpansive((a, b) in square_pair(), step in 0.01f64..2.0) {
        for spec in every_spec() {
            let pa = apply_prox(&spec, a.as_ref(), step).unwrap();
            let pb = apply_prox(&spec, b.as_ref(), step).unwrap();
            prop_assert!((&pa - &pb).norm_l2() <= (&a - &b).norm_l2() * (1.0 + 1e-12) + 1e-12, "{:?}", spec);
        }
    }

    #[test]
    fn nuclear_prox_never_grows_singular_values(a in square(), thr in 0.0f64..5.0) {
        let before = a.singular_values().unwrap();
        let after = prox_nuclear(a.as_ref(), thr).unwrap().singular_values().unwrap();
        for (s0, s1) in before.iter().zip(&after) {
            prop_assert!(*s1 <= *s0 + 1e-9);
        }
        let expected: f64 = before.iter().map(|s| (s - thr).max(0.0)).sum();
        prop_assert!((nuclear_norm(prox_nuclear(a.as_ref(), thr).unwrap().as_ref()).unwrap() - expected).abs() <= 1e-8 * (1.0 + expected));
    }

    #[test]
    fn l1_prox_is_entrywise_shrinkage(a in square(), thr in 0.0f64..5.0) {
        let p = prox_l1(a.as_ref(), thr).unwrap();
        for j in 0..a.ncols() {
            for i in 0..a.nrows() {
                prop_assert!(p[(i, j)].abs() <= a[(i, j)].abs());
                prop_assert!((a[(i, j)] - p[(i, j)]).abs() <= thr + 1e-15);
            }
        }
    }

    #[test]
    fn appending_a_column_extends_pairs(n in 1usize..5, m in 2usize..20, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let series = SnapshotMatrix::new(gaussian(n, m, &mut rng), 0.1).unwrap();
        let mut pairs = build_pairs(&series).unwrap();
        let extra: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        pairs.push(&extra).unwrap();
        prop_assert_eq!(pairs.len(), m);
        for i in 0..n {
            prop_assert_eq!(pairs.y(m - 1)[i], extra[i]);
            prop_assert_eq!(pairs.x(m - 1)[i], series.values()[(i, m - 1)]);
        }
    }

    #[test]
    fn r_squared_ignores_column_permutation(seed in any::<u64>(), shift in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = gaussian(3, 10, &mut rng);
        let pred = gaussian(3, 10, &mut rng);
        let perm = |m: &Mat<f64>| Mat::from_fn(3, 10, |i, k| m[(i, (k + shift) % 10)]);
        let a = r_squared(pred.as_ref(), truth.as_ref()).unwrap();
        let b = r_squared(perm(&pred).as_ref(), perm(&truth).as_ref()).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn prediction_is_linear_in_initial_state(seed in any::<u64>(), c in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = faer::Scale(0.3) * gaussian(4, 4, &mut rng);
        let x0: Vec<f64> = (0..4).map(|_| StandardNormal.sample(&mut rng)).collect();
        let scaled: Vec<f64> = x0.iter().map(|v| c * v).collect();
        let p = predict(&decompose(a.as_ref(), 4, &x0).unwrap(), 8, 1.0).unwrap();
        let q = predict(&decompose(a.as_ref(), 4, &scaled).unwrap(), 8, 1.0).unwrap();
        for k in 0..8 {
            for i in 0..4 {
                prop_assert!((q.values()[(i, k)] - c * p.values()[(i, k)]).abs() <= 1e-9 * (1.0 + p.values()[(i, k)].abs()));
            }
        }
    }
}

#[test]
fn noise_ratio_statistics() {
    let n = 1000;
    let m = 1000;
    let values = Mat::from_fn(n, m, |i, k| if (i + k) % 7 == 0 { 0.0 } else { 1.0 + (i as f64) - 0.37 * k as f64 });
    let clean = SnapshotMatrix::new(values, 1.0).unwrap();
    let noisy = add_noise(&clean, &NoiseSpec::new(0.25, 11).unwrap()).unwrap();
    let (mut sum, mut sq, mut count) = (0.0, 0.0, 0usize);
    for k in 0..m {
        for i in 0..n {
            let v = clean.values()[(i, k)];
            if v != 0.0 {
                let e = noisy.values()[(i, k)] / v - 1.0;
                sum += e;
                sq += e * e;
                count += 1;
            } else {
                assert_eq!(noisy.values()[(i, k)], 0.0);
            }
        }
    }
    let mean = sum / count as f64;
    let std = (sq / count as f64 - mean * mean).sqrt();
    assert!(count > 800_000);
    assert!(mean.abs() <= 0.0025, "{mean}");
    assert!((std - 0.25).abs() <= 0.0025, "{std}");
}

#[test]
fn structural_iterates_stay_on_manifold() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data = gaussian(6, 400, &mut rng);
    for spec in [ConstraintSpec::Symmetric, ConstraintSpec::Circulant, ConstraintSpec::UpperTriangular, ConstraintSpec::Tridiagonal] {
        let mut state = OnlineState::new(6, spec, StepRule::Fixed { step: 0.01 }).unwrap();
        for k in 0..399 {
            state.step(data.col(k), data.col(k + 1)).unwrap();
            let a = state.operator();
            for i in 0..6 {
                for j in 0..6 {
                    let member = match spec {
                        ConstraintSpec::Symmetric => a[(i, j)] == a[(j, i)],
                        ConstraintSpec::Circulant => a[(i, j)] == a[((i + 1) % 6, (j + 1) % 6)],
                        ConstraintSpec::UpperTriangular => i <= j || a[(i, j)] == 0.0,
                        _ => i.abs_diff(j) <= 1 || a[(i, j)] == 0.0,
                    };
                    assert!(member, "{spec:?} at step {k}");
                }
            }
        }
    }
}

#[test]
fn small_fixed_step_does_not_increase_pair_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for spec in every_spec() {
        let mut state = OnlineState::new(5, spec, StepRule::Fixed { step: 1e-3 }).unwrap();
        for _ in 0..200 {
            let x = gaussian(5, 1, &mut rng);
            let y = gaussian(5, 1, &mut rng);
            let lip = 2.0 * x.squared_norm_l2() + 2.0 * spec.lambda();
            let step = 0.9 / lip;
            let mut probe = OnlineState::with_initial(state.operator().to_owned(), spec, StepRule::Fixed { step }).unwrap();
            let f = |a: faer::MatRef<'_, f64>| {
                let r = &y - a * &x;
                let smooth = if let ConstraintSpec::L2 { lambda } = spec { lambda * a.squared_norm_l2() } else { 0.0 };
                r.squared_norm_l2() + smooth + if matches!(spec, ConstraintSpec::L2 { .. }) { 0.0 } else { spec.penalty(a).unwrap() }
            };
            let before = f(probe.operator());
            probe.step(x.col(0), y.col(0)).unwrap();
            assert!(f(probe.operator()) <= before + 1e-12, "{spec:?}");
            state.step(x.col(0), y.col(0)).unwrap();
        }
    }
}

#[test]
fn online_fit_converges_to_least_squares_on_stationary_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 4;
    let truth = faer::Scale(0.4) * gaussian(n, n, &mut rng);
    let x = gaussian(n, 300, &mut rng);
    let y = &truth * &x + faer::Scale(0.05) * gaussian(n, 300, &mut rng);
    let ridge = ridge_dmd(x.as_ref(), y.as_ref(), 1e-9).unwrap().a;
    let mut state = OnlineState::new(n, ConstraintSpec::Unconstrained, StepRule::Fixed { step: 2e-3 }).unwrap();
    for epoch in 0..4000 {
        // decay the step to remove the stochastic noise ball
        let step = 2e-3 / (1.0 + epoch as f64 / 20.0);
        let mut s = OnlineState::with_initial(state.operator().to_owned(), ConstraintSpec::Unconstrained, StepRule::Fixed { step }).unwrap();
        for k in 0..300 {
            s.step(x.col(k), y.col(k)).unwrap();
        }
        state = s;
    }
    let err = (state.operator() - &ridge).norm_l2();
    assert!(err <= 1e-3, "{err}");
}

#[test]
fn rls_reproduces_batch_least_squares_on_prefix() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 4;
    let series = SnapshotMatrix::new(gaussian(n, 40, &mut rng), 1.0).unwrap();
    let pairs = build_pairs(&series).unwrap();
    let mut rls = RlsState::new(n, 1e8, 1.0).unwrap();
    for k in 0..pairs.len() {
        rls.step(pairs.x(k), pairs.y(k)).unwrap();
        if k + 1 >= 2 * n {
            let ls = least_squares_dmd(pairs.x_matrix().subcols(0, k + 1), pairs.y_matrix().subcols(0, k + 1)).unwrap();
            let err = (rls.operator() - &ls).norm_l2() / ls.norm_l2();
            assert!(err <= 1e-6, "prefix {}: {err}", k + 1);
        }
    }
    let fit = online_dmd_fit(&pairs, 1e8, 1.0).unwrap();
    assert_eq!(fit.state.operator(), rls.operator());
}

#[test]
fn full_rank_exact_dmd_equals_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = gaussian(5, 30, &mut rng);
    let y = gaussian(5, 30, &mut rng);
    let ex = exact_dmd(x.as_ref(), y.as_ref(), 5).unwrap();
    let ls = least_squares_dmd(x.as_ref(), y.as_ref()).unwrap();
    assert!((ex.projected_operator() - &ls).norm_l2() <= 1e-9 * ls.norm_l2());
    assert!((ex.full_operator().unwrap() - &ls).norm_l2() <= 1e-8 * ls.norm_l2());
}

#[test]
fn ridge_norm_shrinks_with_lambda() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = gaussian(5, 50, &mut rng);
    let y = gaussian(5, 50, &mut rng);
    let norms: Vec<f64> =
        [0.0, 0.1, 1.0, 10.0, 100.0].iter().map(|&l| ridge_dmd(x.as_ref(), y.as_ref(), l).unwrap().a.norm_l2()).collect();
    assert!(norms.windows(2).all(|w| w[0] >= w[1]), "{norms:?}");
}

#[test]
fn modal_prediction_reproduces_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = faer::Scale(0.35) * gaussian(6, 6, &mut rng);
    let x0: Vec<f64> = (0..6).map(|_| StandardNormal.sample(&mut rng)).collect();
    let p = predict(&decompose(a.as_ref(), 6, &x0).unwrap(), 20, 1.0).unwrap();
    let mut x = Mat::from_fn(6, 1, |i, _| x0[i]);
    for k in 0..20 {
        x = &a * &x;
        for i in 0..6 {
            assert!((p.values()[(i, k)] - x[(i, 0)]).abs() <= 1e-8 * (1.0 + x[(i, 0)].abs()));
        }
    }
}
