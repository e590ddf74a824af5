//! Invariant and threshold suite behind `uno check`.

use std::f64::consts::E;

use rand::Rng;
use serde::Serialize;

use super::{run_experiment, ExperimentConfig, ExperimentId, ExperimentResult};
use crate::error::Result;
use crate::modulo::{align_offset, beta_for_sup, fold, fold_value, unfold, UnfoldConfig};
use crate::noisy::modulo_noise_decompose;
use crate::onebit::{
    gram_check, iteration_lower_bound, quantize_values, rka_solve, DenseSystem, RkaRun, SignMatrix, SignPolyhedron,
    ThresholdEnsemble,
};
use crate::rng;
use crate::signals::gen_bandlimited_random;
use crate::uno::plan_rate;

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name: name.into(), passed, detail }
}

fn failed(name: &str, e: crate::Error) -> CheckOutcome {
    outcome(name, false, format!("error: {e}"))
}

/// Exact invariants always; the Monte-Carlo tables as well when `full`.
pub fn run_checks(full: bool) -> Vec<CheckOutcome> {
    let mut out = vec![
        gram(),
        round_trip().unwrap_or_else(|e| failed("modulo round trip", e)),
        noise_identity().unwrap_or_else(|e| failed("noise decomposition", e)),
        dual_form().unwrap_or_else(|e| failed("dense/coordinate Kaczmarz", e)),
        convergence().unwrap_or_else(|e| failed("Kaczmarz rate", e)),
        calculators(),
    ];
    if full {
        out.extend(tables().unwrap_or_else(|e| vec![failed("experiments", e)]));
    }
    out
}

fn gram() -> CheckOutcome {
    let mut rng = rng::rng(101, 0);
    let mut ok = true;
    for _ in 0..50 {
        let n = rng.random_range(1..=64);
        let m = rng.random_range(1..=64);
        let signs = (0..n * m).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let r = SignMatrix::new(n, m, signs).expect("valid shape");
        ok &= gram_check(&r).is_scaled_identity(m as i64);
    }
    outcome("Gram matrix equals m·I", ok, "50 random sign matrices".into())
}

fn round_trip() -> Result<CheckOutcome> {
    let n = 2048;
    let dt = 1e-3;
    let omega = 0.5 / (E * dt);
    let mut worst = 0.0_f64;
    for t in 0..100u64 {
        let lambda = [0.2, 0.5, 1.0][t as usize % 3];
        let sup = 1.0 + 7.0 * (t as f64 / 99.0);
        let x = gen_bandlimited_random(n, omega, dt, sup, 500 + t)?;
        let cfg = UnfoldConfig::for_rate(lambda, beta_for_sup(sup, lambda), dt, omega)?;
        let y = unfold(&fold(x.samples(), lambda)?, &cfg)?;
        let y = align_offset(x.samples(), &y, lambda)?;
        for (a, b) in x.samples().iter().zip(&y) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(outcome("modulo round trip", worst <= 1e-8, format!("max error {worst:.3e}")))
}

fn noise_identity() -> Result<CheckOutcome> {
    let mut rng = rng::rng(202, 0);
    let mut worst = 0.0_f64;
    let mut in_range = true;
    for _ in 0..100_000 {
        let lambda = rng.random_range(0.05..5.0);
        let x = rng.random_range(-50.0..50.0);
        let z = rng.random_range(-10.0..10.0);
        let (zt, _) = modulo_noise_decompose(&[x], &[z], lambda)?;
        worst = worst.max((fold_value(x + z, lambda) - fold_value(x, lambda) - zt[0]).abs());
        in_range &= zt[0] > -2.0 * lambda && zt[0] < 2.0 * lambda;
    }
    Ok(outcome("noise decomposition", worst <= 1e-9 && in_range, format!("max error {worst:.3e} over 1e5 triples")))
}

fn dual_form() -> Result<CheckOutcome> {
    let thr = ThresholdEnsemble::gaussian(8, 5, 0.5, 303)?;
    let x: Vec<f64> = (0..8).map(|k| 0.4 * (k as f64).sin()).collect();
    let r = quantize_values(&x, &thr)?;
    let run = RkaRun::new(10_000, 7, 8).with_trace(1);
    let a = rka_solve(&r, &thr, &run)?;
    let b = DenseSystem::from_signs(&r, &thr)?.kaczmarz(&run)?;
    let same = a.estimate.iter().zip(&b.estimate).all(|(p, q)| p.to_bits() == q.to_bits()) && a.trace == b.trace;
    Ok(outcome("dense/coordinate Kaczmarz", same, "10^4 iterations, 8×5 instance".into()))
}

fn convergence() -> Result<CheckOutcome> {
    let n = 10;
    let q = 1.0 - 1.0 / n as f64;
    let checkpoints = [10usize, 100, 1000];
    let mut sums = [0.0; 3];
    let mut omega0 = 0.0;
    let x: Vec<f64> = (0..n).map(|k| 0.8 * ((k as f64) * 1.3).sin()).collect();
    let thr = ThresholdEnsemble::gaussian(n, 1, 0.5, 404)?;
    let r = quantize_values(&x, &thr)?;
    let star = SignPolyhedron::new(&r, &thr)?.project_onto(&vec![0.0; n]);
    for trial in 0..200u64 {
        omega0 = star.iter().map(|v| v * v).sum::<f64>();
        for (i, &c) in checkpoints.iter().enumerate() {
            let est = rka_solve(&r, &thr, &RkaRun::new(c, 1000 + trial, n))?.estimate;
            sums[i] += est.iter().zip(&star).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
    }
    let mut ok = true;
    let mut detail = Vec::new();
    for (i, &c) in checkpoints.iter().enumerate() {
        let mean = sums[i] / 200.0;
        let bound = 1.2 * q.powi(c as i32) * omega0;
        ok &= mean <= bound;
        detail.push(format!("i={c}: {mean:.3e} ≤ {bound:.3e}"));
    }
    Ok(outcome("Kaczmarz rate", ok, detail.join(", ")))
}

fn calculators() -> CheckOutcome {
    let h = plan_rate(4.0, 1.0, 0.05, 100.0, 2.0).map(|p| p.h).ok();
    let i = iteration_lower_bound(1.0, 1e-6, 1000).ok();
    outcome("rate calculators", h == Some(2) && i == Some(13809), format!("h={h:?}, i={i:?}"))
}

fn mean_of(res: &ExperimentResult, label: &str, pred: impl Fn(&super::Cell) -> bool) -> f64 {
    res.cell(label, pred).map_or(f64::NAN, |c| c.mean_db)
}

fn tables() -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();

    let saw = run_experiment(&ExperimentConfig::defaults(ExperimentId::Sawtooth))?;
    let v = mean_of(&saw, "onebit", |_| true);
    out.push(outcome("sawtooth", v <= -25.0, format!("{v:.2} dB")));

    let t1 = run_experiment(&ExperimentConfig::defaults(ExperimentId::Table1))?;
    let reference = [(0.2, -72.721), (0.5, -67.660), (1.0, -60.987)];
    let got: Vec<f64> = reference.iter().map(|(l, _)| mean_of(&t1, "uno", |c| c.lambda == Some(*l))).collect();
    let close = reference.iter().zip(&got).all(|((_, p), g)| (g - p).abs() <= 6.0);
    let ordered = got[0] <= got[1] && got[1] <= got[2];
    out.push(outcome("table1", close && ordered, format!("{got:.2?}")));

    let t2 = run_experiment(&ExperimentConfig::defaults(ExperimentId::Table2))?;
    let got: Vec<f64> = t2.cells.iter().map(|c| c.mean_db).collect();
    out.push(outcome("table2", got.iter().all(|&v| v <= -55.0), format!("{got:.2?}")));

    let mut fig = ExperimentConfig::defaults(ExperimentId::FigNmseVsM);
    fig.ms = vec![50, 400];
    let fig = run_experiment(&fig)?;
    let gain = mean_of(&fig, "uno", |c| c.m == 50) - mean_of(&fig, "uno", |c| c.m == 400);
    out.push(outcome("nmse vs m", gain >= 20.0, format!("gain {gain:.2} dB")));

    for id in [ExperimentId::Table4Over, ExperimentId::Table4Under] {
        let res = run_experiment(&ExperimentConfig::defaults(id))?;
        let hi = mean_of(&res, "noisy_uno", |c| c.sigma2 == 0.1);
        let lo = mean_of(&res, "noisy_uno", |c| c.sigma2 == 0.01);
        let limit = if id == ExperimentId::Table4Over { -30.0 } else { -20.0 };
        out.push(outcome(id.name(), lo <= limit && hi - lo >= 2.0, format!("σ²=0.1: {hi:.2} dB, σ²=0.01: {lo:.2} dB")));
    }

    let c1 = run_experiment(&ExperimentConfig::defaults(ExperimentId::Claim1))?;
    let base = mean_of(&c1, "onebit", |c| c.m == 400) - mean_of(&c1, "onebit", |c| c.m == 1600);
    let uno = mean_of(&c1, "uno", |c| c.m == 400) - mean_of(&c1, "uno", |c| c.m == 1600);
    out.push(outcome("claim1", base < 3.0 && uno >= 10.0, format!("baseline gain {base:.2} dB, uno gain {uno:.2} dB")));
    Ok(out)
}
