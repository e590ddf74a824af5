//! Solvers checked against independent reference computations.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use uno_core::noisy::{pnp_admm, simulate_noisy, AdmmConfig, DenoiserSpec, LinearModel};
use uno_core::onebit::{quantize_values, rka_solve, RkaRun, SignPolyhedron, ThresholdEnsemble};
use uno_core::rng;

fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut g = rng::rng(seed, 99);
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut g))
}

/// Gaussian elimination with partial pivoting on plain vectors.
#[allow(clippy::needless_range_loop)]
fn solve_dense(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / m[r][r];
    }
    x
}

#[test]
fn admm_with_identity_denoiser_is_least_squares() {
    let a = gaussian(30, 5, 1);
    let y = DVector::from_fn(30, |i, _| (i as f64 * 0.37).sin());
    let normal: Vec<Vec<f64>> =
        (0..5).map(|i| (0..5).map(|j| (0..30).map(|k| a[(k, i)] * a[(k, j)]).sum()).collect()).collect();
    let rhs: Vec<f64> = (0..5).map(|i| (0..30).map(|k| a[(k, i)] * y[k]).sum()).collect();
    let want = solve_dense(normal, rhs);

    let cfg = AdmmConfig { eta: 0.0, beta: 1.0, k_max: 500, denoiser: DenoiserSpec::new("identity", vec![]) };
    let got = pnp_admm(&y, &a, &cfg, &DVector::zeros(5)).unwrap();
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() <= 1e-8, "{g} vs {w}");
    }
}

#[test]
fn admm_with_soft_threshold_solves_the_lasso() {
    // min ‖y − Aθ‖² + η‖θ‖₁ by proximal gradient as the reference.
    let a = gaussian(20, 8, 2);
    let truth = DVector::from_vec(vec![1.5, 0.0, 0.0, -2.0, 0.0, 0.7, 0.0, 0.0]);
    let y = &a * &truth + DVector::from_fn(20, |i, _| 0.05 * (i as f64).cos());
    let eta = 2.0;

    let lip = 2.0 * a.clone().svd(false, false).singular_values.max().powi(2);
    let step = 1.0 / lip;
    let mut theta = DVector::zeros(8);
    for _ in 0..20_000 {
        let grad = a.tr_mul(&(&a * &theta - &y)) * 2.0;
        theta = (&theta - grad * step).map(|v: f64| v.signum() * (v.abs() - step * eta).max(0.0));
    }

    let cfg = AdmmConfig { eta, beta: 5.0, k_max: 3000, denoiser: DenoiserSpec::default() };
    let got = pnp_admm(&y, &a, &cfg, &DVector::zeros(8)).unwrap();
    for (g, w) in got.iter().zip(theta.iter()) {
        assert!((g - w).abs() <= 1e-6, "{g} vs {w}");
    }
}

#[test]
fn simulated_noise_has_the_requested_variance() {
    let r = 100_000;
    let a = DMatrix::from_element(r, 1, 1.0);
    let model = LinearModel::new(a, DVector::from_element(1, 0.25), 0.3).unwrap();
    let y = simulate_noisy(&model, 5);
    let mean = y.mean();
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r as f64 - 1.0);
    assert!((mean - 0.25).abs() < 5e-3, "mean {mean}");
    assert!((var / 0.09 - 1.0).abs() < 0.02, "variance {var}");
}

#[test]
fn negating_signal_and_thresholds_negates_everything() {
    let n = 12;
    let thr = ThresholdEnsemble::gaussian(n, 6, 0.4, 8).unwrap();
    let mut g = rng::rng(3, 0);
    let x: Vec<f64> = (0..n).map(|_| g.random_range(-0.9..0.9)).collect();
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();

    let r = quantize_values(&x, &thr).unwrap();
    let rn = quantize_values(&neg, &thr.negated()).unwrap();
    assert_eq!(rn, r.negated());

    let run = RkaRun::new(5_000, 11, n);
    let a = rka_solve(&r, &thr, &run).unwrap().estimate;
    let b = rka_solve(&rn, &thr.negated(), &run).unwrap().estimate;
    for (p, q) in a.iter().zip(&b) {
        assert_eq!(p.to_bits(), (-q).to_bits());
    }
}

#[test]
fn converged_kaczmarz_is_feasible_and_brackets_the_truth() {
    let n = 16;
    let thr = ThresholdEnsemble::gaussian(n, 20, 0.5, 4).unwrap();
    let x: Vec<f64> = (0..n).map(|k| 0.6 * (k as f64 * 0.5).sin()).collect();
    let r = quantize_values(&x, &thr).unwrap();
    let out = rka_solve(&r, &thr, &RkaRun::new(200_000, 1, n).with_early_stop()).unwrap();
    let poly = SignPolyhedron::new(&r, &thr).unwrap();
    assert!(poly.max_violation(&out.estimate) < 1e-12);
    // Independent feasible interval per sample from the raw thresholds.
    for (k, &xk) in x.iter().enumerate() {
        let below = (0..20).map(|l| thr.get(k, l)).filter(|&t| t <= xk).fold(f64::NEG_INFINITY, f64::max);
        let above = (0..20).map(|l| thr.get(k, l)).filter(|&t| t > xk).fold(f64::INFINITY, f64::min);
        assert!(out.estimate[k] >= below - 1e-12 && out.estimate[k] <= above + 1e-12);
    }
}
