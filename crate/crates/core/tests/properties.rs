//! Property tests for the folding, differencing and Kaczmarz invariants.

use proptest::prelude::*;
use uno_core::modulo::{align_offset, beta_for_sup, finite_diff, fold, fold_value, inverse_diff, unfold, UnfoldConfig};
use uno_core::noisy::modulo_noise_decompose;
use uno_core::onebit::{quantize_values, SignPolyhedron, ThresholdEnsemble};
use uno_core::signals::{gen_bandlimited_random, nmse_db};
use uno_core::uno::plan_rate;

fn lambdas() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.2), Just(0.5), Just(1.0), 0.05..4.0]
}

proptest! {
    #[test]
    fn fold_lands_in_range_and_is_idempotent(x in -1e4..1e4f64, lambda in lambdas()) {
        let y = fold_value(x, lambda);
        prop_assert!(y >= -lambda && y < lambda);
        prop_assert_eq!(fold_value(y, lambda), y);
        // x − y is an integer multiple of 2λ.
        let k = (x - y) / (2.0 * lambda);
        prop_assert!((k - k.round()).abs() <= 1e-9 * (1.0 + k.abs()));
    }

    #[test]
    fn differencing_inverts_prefix_sums(v in prop::collection::vec(-10.0..10.0f64, 2..200)) {
        // Prefix sums: the first difference drops v[0] and returns the rest.
        let t = inverse_diff(&v);
        prop_assert!((t[0] - v[0]).abs() <= 1e-12);
        let back = finite_diff(&t, 1).unwrap();
        for (a, b) in back.iter().zip(&v[1..]) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn nmse_ignores_common_scaling(v in prop::collection::vec(0.1..10.0f64, 4..64), e in 0.001..0.5f64, c in 0.01..100.0f64) {
        let est: Vec<f64> = v.iter().enumerate().map(|(i, x)| x + if i % 2 == 0 { e } else { -e }).collect();
        let a = nmse_db(&v, &est).unwrap();
        let sv: Vec<f64> = v.iter().map(|x| x * c).collect();
        let se: Vec<f64> = est.iter().map(|x| x * c).collect();
        let b = nmse_db(&sv, &se).unwrap();
        prop_assert!((a - b).abs() <= 1e-9);
    }

    #[test]
    fn noise_decomposition_holds(x in -50.0..50.0f64, z in -10.0..10.0f64, lambda in lambdas()) {
        let (zt, q) = modulo_noise_decompose(&[x], &[z], lambda).unwrap();
        prop_assert!((fold_value(x + z, lambda) - fold_value(x, lambda) - zt[0]).abs() <= 1e-9);
        prop_assert!(zt[0] > -2.0 * lambda && zt[0] < 2.0 * lambda);
        prop_assert!(q[0] <= 1);
    }

    #[test]
    fn plan_rate_never_decreases_with_dynamic_range(lambda in 0.5..2.0f64, b1 in 1.0..20.0f64, b2 in 1.0..20.0f64) {
        let e = lambda / 10.0;
        let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
        let p = plan_rate(lo * lambda, lambda, e, 50.0, 1.5).unwrap();
        let q = plan_rate(hi * lambda, lambda, e, 50.0, 1.5).unwrap();
        prop_assert!(p.h <= q.h);
        prop_assert!(p.dt_required >= q.dt_required);
    }

    #[test]
    fn projection_never_adds_violation(seed in 0u64..1000, j in 0usize..40) {
        let n = 8;
        let thr = ThresholdEnsemble::gaussian(n, 5, 0.5, seed).unwrap();
        let truth: Vec<f64> = (0..n).map(|k| 0.3 * ((k as f64) + seed as f64).cos()).collect();
        let r = quantize_values(&truth, &thr).unwrap();
        let poly = SignPolyhedron::new(&r, &thr).unwrap();
        let mut x = vec![0.0; n];
        let before = poly.max_violation(&x);
        poly.project(&mut x, j);
        prop_assert!(poly.max_violation(&x) <= before + 1e-15);
        prop_assert!(poly.residual(&x, j) <= 1e-15);
        // The truth is feasible, so it violates nothing.
        prop_assert!(poly.max_violation(&truth) <= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn unfolding_recovers_the_signal(seed in 0u64..10_000, lambda in prop_oneof![Just(0.2), Just(0.5), Just(1.0)], sup in 1.0..8.0f64) {
        let dt = 1e-3;
        let omega = 0.5 / (std::f64::consts::E * dt);
        let x = gen_bandlimited_random(1024, omega, dt, sup, seed).unwrap();
        let cfg = UnfoldConfig::for_rate(lambda, beta_for_sup(sup, lambda), dt, omega).unwrap();
        let y = unfold(&fold(x.samples(), lambda).unwrap(), &cfg).unwrap();
        // Differences of the output match those of the input before any
        // offset is resolved.
        let dx = finite_diff(x.samples(), cfg.diff_order).unwrap();
        let dy = finite_diff(&y, cfg.diff_order).unwrap();
        for (a, b) in dx.iter().zip(&dy) {
            prop_assert!((a - b).abs() <= 1e-8);
        }
        let y = align_offset(x.samples(), &y, lambda).unwrap();
        for (a, b) in x.samples().iter().zip(&y) {
            prop_assert!((a - b).abs() <= 1e-8);
        }
    }
}
