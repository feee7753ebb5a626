mod common;

use pca_adapt::pca::{self, fit_pca, resolve_retention};
use pca_adapt::EmbeddingMatrix;
use proptest::prelude::*;

fn rows_strategy(max_k: usize, max_d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2..=max_k, 1..=max_d).prop_flat_map(|(k, d)| {
        proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, d), k)
    })
}

fn fit_full(rows: &[Vec<f64>]) -> pca_adapt::PcaModel {
    let m = common::matrix(rows, "r");
    let spec = resolve_retention(1.0, m.dim(), m.n_items()).unwrap();
    fit_pca(&m, &spec).unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[test]
fn matches_jacobi_on_fixed_seeds() {
    let mut rng = common::rng(11);
    for case in 0..50 {
        let k = 3 + case % 15;
        let d = 1 + case % 8;
        let rows = common::random_rows(&mut rng, k, d);
        let model = fit_full(&rows);
        let oracle = common::jacobi_eigen(&common::covariance(&rows));
        for c in 0..model.n_components() {
            assert!((model.eigenvalues()[c] - oracle[c].0).abs() < 1e-8);
            assert!(common::sign_free_distance(model.axis(c), &oracle[c].1) < 1e-8);
        }
    }
}

#[test]
fn axes_follow_sign_convention() {
    let mut rng = common::rng(5);
    let rows = common::random_rows(&mut rng, 30, 6);
    let model = fit_full(&rows);
    for axis in model.axes() {
        let top = axis.iter().fold(0.0f64, |m, v| if v.abs() > m.abs() { *v } else { m });
        assert!(top > 0.0);
    }
}

#[test]
fn scaling_data_scales_eigenvalues() {
    let mut rng = common::rng(8);
    let rows = common::random_rows(&mut rng, 25, 5);
    let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| 3.0 * v).collect()).collect();
    let a = fit_full(&rows);
    let b = fit_full(&scaled);
    for (x, y) in a.eigenvalues().iter().zip(b.eigenvalues()) {
        assert!((9.0 * x - y).abs() < 1e-9 * y.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn axes_are_orthonormal(rows in rows_strategy(20, 8)) {
        let model = fit_full(&rows);
        for i in 0..model.n_components() {
            for j in 0..model.n_components() {
                let ip: f64 = model.axis(i).iter().zip(model.axis(j)).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((ip - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn eigenvalues_sorted_and_nonnegative(rows in rows_strategy(20, 8)) {
        let model = fit_full(&rows);
        let ev = model.eigenvalues();
        prop_assert!(ev.iter().all(|&v| v >= 0.0));
        prop_assert!(ev.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn captures_at_least_as_much_variance_as_any_basis(
        rows in rows_strategy(20, 8),
        seed in any::<u64>(),
        frac in 0.05f64..1.0,
    ) {
        let d = rows[0].len();
        let k = rows.len();
        let target = ((frac * d as f64).ceil() as usize).clamp(1, d.min(k - 1));
        let cov = common::covariance(&rows);
        let model = fit_full(&rows);
        let captured: f64 = model.eigenvalues()[..target].iter().sum();
        let mut rng = common::rng(seed);
        let basis = common::random_orthonormal(&mut rng, d, target);
        let other = common::quad_form_trace(&cov, &basis);
        prop_assert!(other <= captured + 1e-9 * captured.max(1.0));
    }

    #[test]
    fn reconstruction_error_shrinks_with_more_components(rows in rows_strategy(20, 8)) {
        let m = common::matrix(&rows, "r");
        let d = m.dim();
        let cap = d.min(m.n_items() - 1);
        let mut previous = f64::INFINITY;
        for target in 1..=cap {
            let spec = pca::RetentionSpec { ratio: target as f64 / d as f64, resolved_dim: target };
            let model = fit_pca(&m, &spec).unwrap();
            let mut err = 0.0;
            for row in m.rows() {
                let z = model.project_row(row);
                let mut back = model.mean().to_vec();
                for (c, zc) in z.iter().enumerate() {
                    for (b, a) in back.iter_mut().zip(model.axis(c)) {
                        *b += zc * a;
                    }
                }
                err += dist(row, &back).powi(2);
            }
            prop_assert!(err <= previous + 1e-9 * previous.min(1e12).max(1.0));
            previous = err;
        }
    }

    #[test]
    fn full_rank_projection_is_an_isometry(
        seed in any::<u64>(),
        d in 1usize..8,
        extra in 1usize..12,
    ) {
        let mut rng = common::rng(seed);
        let rows = common::random_rows(&mut rng, d + extra, d);
        let m = common::matrix(&rows, "r");
        let model = fit_full(&rows);
        prop_assert_eq!(model.n_components(), d);
        let p = pca::project(&model, &m).unwrap();
        for i in 0..m.n_items() {
            for j in 0..i {
                prop_assert!((dist(m.row(i), m.row(j)) - dist(p.row(i), p.row(j))).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn projected_fit_samples_are_centered(rows in rows_strategy(20, 8)) {
        let m = common::matrix(&rows, "r");
        let model = fit_full(&rows);
        let p = pca::project(&model, &m).unwrap();
        for c in 0..p.dim() {
            let mean: f64 = p.rows().map(|r| r[c]).sum::<f64>() / p.n_items() as f64;
            let scale: f64 = rows.iter().flatten().map(|v| v.abs()).fold(1.0, f64::max);
            prop_assert!(mean.abs() < 1e-9 * scale);
        }
    }
}

#[test]
fn stacked_fit_equals_fit_on_concatenation() {
    let mut rng = common::rng(21);
    let a = common::random_rows(&mut rng, 12, 5);
    let b = common::random_rows(&mut rng, 9, 5);
    let both: Vec<Vec<f64>> = a.iter().chain(&b).cloned().collect();
    let spec = resolve_retention(0.6, 5, 21).unwrap();
    let stacked = pca::fit_pca_stacked(
        &[&common::matrix(&a, "a"), &common::matrix(&b, "b")],
        &spec,
        pca_adapt::FitSource::QueriesAndDocuments,
    )
    .unwrap();
    let single = fit_pca(&common::matrix(&both, "x"), &spec).unwrap();
    for c in 0..spec.resolved_dim {
        assert!((stacked.eigenvalues()[c] - single.eigenvalues()[c]).abs() < 1e-10);
        assert!(common::sign_free_distance(stacked.axis(c), single.axis(c)) < 1e-10);
    }
}

#[test]
fn projection_rejects_wrong_dimension() {
    let mut rng = common::rng(3);
    let model = fit_full(&common::random_rows(&mut rng, 10, 4));
    let other = EmbeddingMatrix::from_rows(&[vec![1.0, 2.0, 3.0]], None).unwrap();
    assert!(matches!(
        pca::project(&model, &other),
        Err(pca_adapt::Error::DimensionMismatch { expected: 4, found: 3 })
    ));
}
