//! Operator identities across the dense, identity and Radon implementations.

use nalgebra::DMatrix;
use proptest::prelude::*;

use nsmi_core::image::uniform_angles;
use nsmi_core::metrics::psnr;
use nsmi_core::noise::{seeded_rng, standard_normal, standard_normal_vec};
use nsmi_core::operators::{
    cgls, fbp_reconstruct, DenseOperator, Filter, IdentityOperator, MeasurementOperator, RadonOperator,
    SolverOptions,
};
use nsmi_core::phantom::shepp_logan;
use nsmi_core::Image;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn tight() -> SolverOptions {
    SolverOptions::new(1e-10, 5000)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn radon_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let op = RadonOperator::new(12, 5).unwrap();
        let op: &dyn MeasurementOperator = &op;
        let mut rng = seeded_rng(seed);
        let x = standard_normal(&mut rng, 12, 12);
        let z = standard_normal(&mut rng, 12, 12);
        let lhs = op.apply(&x.lincomb(a, &z, b).unwrap()).unwrap();
        let (ax, az) = (op.apply(&x).unwrap(), op.apply(&z).unwrap());
        let rhs: Vec<f64> = ax.values().iter().zip(az.values()).map(|(p, q)| a * p + b * q).collect();
        prop_assert!(max_abs_diff(lhs.values(), &rhs) < 1e-10);
    }

    #[test]
    fn radon_adjoint_identity(seed in any::<u64>(), n_angles in 1usize..12) {
        let op = RadonOperator::new(10, n_angles).unwrap();
        let op: &dyn MeasurementOperator = &op;
        let mut rng = seeded_rng(seed);
        let x = standard_normal(&mut rng, 10, 10);
        let y = op.measurement(standard_normal_vec(&mut rng, op.output_len())).unwrap();
        let lhs = dot(op.apply(&x).unwrap().values(), y.values());
        let rhs = dot(x.pixels(), op.adjoint(&y).unwrap().pixels());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }
}

#[test]
fn range_and_null_projections() {
    let op = RadonOperator::new(16, 6).unwrap();
    let op: &dyn MeasurementOperator = &op;
    let x = shepp_logan(16).unwrap();
    let null = op.null_project(&x, &tight()).unwrap();
    let a_null = op.apply(&null).unwrap();
    assert!(a_null.values().iter().all(|v| v.abs() < 1e-6), "A(I - A†A)x ≠ 0");

    let range = op.range_project(&x, &tight()).unwrap();
    let twice = op.range_project(&range, &tight()).unwrap();
    assert!(max_abs_diff(range.pixels(), twice.pixels()) < 1e-6);
    // orthogonal split
    assert!(dot(range.pixels(), null.pixels()).abs() < 1e-6 * x.norm().powi(2));
}

#[test]
fn identity_operator_projections_are_trivial() {
    let op = IdentityOperator::new(5, 7);
    let op: &dyn MeasurementOperator = &op;
    let x = standard_normal(&mut seeded_rng(2), 7, 5);
    assert_eq!(op.pinv_apply(&op.apply(&x).unwrap(), &tight()).unwrap(), x);
    assert!(op.null_project(&x, &tight()).unwrap().pixels().iter().all(|&v| v == 0.0));
}

#[test]
fn dense_pseudo_inverse_matches_svd_oracle() {
    // rank-deficient 6x10: the last two rows repeat combinations of the first
    let mut rng = seeded_rng(11);
    let mut rows: Vec<Vec<f64>> = (0..4).map(|_| standard_normal_vec(&mut rng, 10)).collect();
    rows.push(rows[0].iter().zip(&rows[1]).map(|(a, b)| a + b).collect());
    rows.push(rows[2].iter().map(|a| 2.0 * a).collect());
    let data: Vec<f64> = rows.concat();
    let op = DenseOperator::new(data.clone(), 6, 10).unwrap();
    assert_eq!(op.rank(), 4);

    let oracle = DMatrix::from_row_slice(6, 10, &data).pseudo_inverse(1e-10).unwrap();
    let ours = op.pseudo_inverse();
    assert!((ours - &oracle).amax() < 1e-10);

    let y = standard_normal_vec(&mut rng, 6);
    let exact = &oracle * nalgebra::DVector::from_column_slice(&y);
    let via_trait = op.pinv_into(&y, &tight()).unwrap();
    assert!(max_abs_diff(&via_trait, exact.as_slice()) < 1e-10);
    // CGLS from zero converges to the same minimum-norm solution
    let (iterative, _) = cgls(&op, &y, &tight()).unwrap();
    assert!(max_abs_diff(&iterative, exact.as_slice()) < 1e-7);
}

#[test]
fn materialized_radon_matches_matrix_free() {
    let op = RadonOperator::new(8, 4).unwrap();
    let op: &dyn MeasurementOperator = &op;
    let dense = op.materialize();
    let dense_dyn: &dyn MeasurementOperator = &dense;
    let x = standard_normal(&mut seeded_rng(4), 8, 8);
    let y = op.apply(&x).unwrap();
    assert!(max_abs_diff(y.values(), dense_dyn.apply(&x).unwrap().values()) < 1e-12);
    let back = op.adjoint(&y).unwrap();
    assert!(max_abs_diff(back.pixels(), dense_dyn.adjoint(&y).unwrap().pixels()) < 1e-12);
    let p_iter = op.pinv_apply(&y, &tight()).unwrap();
    let p_svd = dense_dyn.pinv_apply(&y, &tight()).unwrap();
    assert!(max_abs_diff(p_iter.pixels(), p_svd.pixels()) < 1e-6);
}

#[test]
fn fbp_quality_grows_with_views() {
    // 128×128: at 64×64 edge discretization caps dense-view FBP near 22 dB
    let x = shepp_logan(128).unwrap();
    let quality = |views: usize| {
        let op = RadonOperator::with_angles(128, uniform_angles(views), RadonOperator::default_detectors(128)).unwrap();
        let y = (&op as &dyn MeasurementOperator).apply(&x).unwrap();
        let r: Image = fbp_reconstruct(&op, &y, Filter::RamLak).unwrap();
        psnr(&x, &r, 1.0).unwrap()
    };
    let dense = quality(180);
    let sparse = quality(10);
    assert!(dense > 25.0, "180 views: {dense:.2} dB");
    assert!(sparse < dense, "10 views: {sparse:.2} dB");
}
