mod common;

use common::{mmd_oracle_max_error, rff_mean_abs_error};
use metacgnn::kernels::{
    gaussian_kernel, mmd2_biased, mmd2_linear, mmd2_unbiased, mmd2_unbiased_with_grad, rff_maps_for, BandwidthSet, JointMmd, RffMap,
};
use metacgnn::nn::finite_diff_check;
use metacgnn::rng;
use proptest::prelude::*;

#[test]
fn unbiased_mmd_matches_double_loop_oracle() {
    let worst = mmd_oracle_max_error(200, 77);
    assert!(worst < 1e-12, "{worst}");
}

#[test]
fn hand_computed_examples() {
    let one = BandwidthSet::new(vec![1.0]).unwrap();
    // Identical two-point sets: within terms e^{-1} each, cross mean (2 + 2 e^{-1}) / 4.
    let u = [0.0, 1.0];
    let got = mmd2_unbiased(&u, &u, 1, &one).unwrap();
    let e = (-1.0f64).exp();
    assert!((got - (2.0 * e - (1.0 + e))).abs() < 1e-15);
    assert_eq!(gaussian_kernel(&[1.0, 2.0], &[1.0, 2.0], 0.3).unwrap(), 1.0);
    assert!(mmd2_unbiased(&[0.0], &[1.0, 2.0], 1, &one).is_err());
    assert!(BandwidthSet::new(vec![]).is_err());
    assert!(BandwidthSet::new(vec![-1.0]).is_err());
}

#[test]
fn mmd_gradient_matches_finite_differences() {
    let bands = BandwidthSet::default();
    let mut r = rng::rng(5);
    for _ in 0..20 {
        let u: Vec<f64> = (0..12).map(|_| rng::normal(&mut r)).collect();
        let v: Vec<f64> = (0..16).map(|_| rng::normal(&mut r) + 0.3).collect();
        let (_, du, dv) = mmd2_unbiased_with_grad(&u, &v, 2, &bands).unwrap();
        let eu = finite_diff_check(&u, &du, 1e-6, |p| mmd2_unbiased(p, &v, 2, &bands).unwrap());
        let ev = finite_diff_check(&v, &dv, 1e-6, |p| mmd2_unbiased(&u, p, 2, &bands).unwrap());
        assert!(eu < 1e-5 && ev < 1e-5, "{eu} {ev}");
    }
}

#[test]
fn joint_mmd_agrees_with_generic_estimator() {
    let bands = BandwidthSet::default();
    let x = rng::normals(1, 40);
    let y = rng::normals(2, 40);
    let yhat = rng::normals(3, 40);
    let target = JointMmd::new(&x, &y, &bands).unwrap();
    let (val, grad) = target.evaluate(&yhat, true).unwrap();
    let pack = |a: &[f64], b: &[f64]| a.iter().zip(b).flat_map(|(p, q)| [*p, *q]).collect::<Vec<_>>();
    let (want, du, _) = mmd2_unbiased_with_grad(&pack(&x, &yhat), &pack(&x, &y), 2, &bands).unwrap();
    assert!((val - want).abs() < 1e-12);
    for j in 0..40 {
        assert!((grad[j] - du[2 * j + 1]).abs() < 1e-12);
    }
}

#[test]
fn rff_approximates_kernel() {
    let mean = rff_mean_abs_error(0.5, 500, 20, 1000);
    assert!(mean <= 0.05, "mean abs error {mean}");
}

#[test]
fn rff_feature_norm_is_one() {
    let map = RffMap::new(3, 64, 0.7, 3).unwrap();
    let z = map.features(&[0.2, -1.0, 4.0]).unwrap();
    let n: f64 = z.iter().map(|v| v * v).sum();
    assert!((n - 1.0).abs() < 1e-12);
    assert!(RffMap::new(3, 63, 0.7, 3).is_err());
}

#[test]
fn linear_mmd_tracks_quadratic_on_separated_samples() {
    let bands = BandwidthSet::default();
    let maps = rff_maps_for(&bands, 1, 2000, 4).unwrap();
    let u = rng::normals(8, 400);
    let v: Vec<f64> = rng::normals(9, 400).iter().map(|z| z + 2.0).collect();
    let quad = mmd2_unbiased(&u, &v, 1, &bands).unwrap();
    let lin = mmd2_linear(&u, &v, 1, &maps).unwrap();
    assert!((quad - lin).abs() < 0.1 * quad, "{quad} {lin}");
}

proptest! {
    #[test]
    fn mmd_is_symmetric_and_biased_bounds_unbiased(
        u in prop::collection::vec(-3.0f64..3.0, 2..20),
        v in prop::collection::vec(-3.0f64..3.0, 2..20),
    ) {
        let bands = BandwidthSet::default();
        let a = mmd2_unbiased(&u, &v, 1, &bands).unwrap();
        let b = mmd2_unbiased(&v, &u, 1, &bands).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(mmd2_biased(&u, &v, 1, &bands).unwrap() >= -1e-12);
    }

    #[test]
    fn mmd_is_permutation_invariant(mut u in prop::collection::vec(-3.0f64..3.0, 3..20), seed in 0u64..1000) {
        let bands = BandwidthSet::default();
        let v: Vec<f64> = rng::normals(seed, 10);
        let a = mmd2_unbiased(&u, &v, 1, &bands).unwrap();
        u.reverse();
        let b = mmd2_unbiased(&u, &v, 1, &bands).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }
}
