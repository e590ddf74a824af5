//! The end-to-end pipeline: fold, compare against designed thresholds,
//! recover the folded samples with Kaczmarz, then unfold.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::modulo::{fold, min_diff_order, unfold, UnfoldConfig};
use crate::onebit::{design_thresholds, quantize, rka_solve, RkaRun, SignMatrix, ThresholdEnsemble};
use crate::signals::SampledSignal;

/// What the receiver sees: sign bits, the thresholds that produced them, and
/// the acquisition parameters. The folded samples themselves are not kept.
#[derive(Debug, Clone, PartialEq)]
pub struct UnoMeasurements {
    pub signs: SignMatrix,
    pub thresholds: ThresholdEnsemble,
    pub lambda: f64,
    pub dt: f64,
    pub omega_max: f64,
}

/// Sampling-rate plan: oversampling exponent `h` and the interval it needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnoRateplan {
    pub h: u32,
    pub dt_required: f64,
    pub zeta: f64,
    pub e_inf: f64,
}

/// Fold, design `σ_τ = λ/3` thresholds from `seed`, and quantize.
pub fn uno_sample(x: &SampledSignal, lambda: f64, m: usize, seed: u64) -> Result<UnoMeasurements> {
    if m == 0 {
        return Err(invalid("need at least one threshold sequence"));
    }
    let folded = fold(x.samples(), lambda)?;
    let thresholds = design_thresholds(lambda, x.len(), m, seed)?;
    let signs = quantize(&folded, &thresholds)?;
    Ok(UnoMeasurements { signs, thresholds, lambda, dt: x.dt(), omega_max: x.omega_max() })
}

/// Reconstruction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructConfig {
    pub beta_x: f64,
    pub i_max: usize,
    pub seed: u64,
    /// Stop Kaczmarz after a sweep with no violated row.
    #[serde(default)]
    pub early_stop: bool,
    /// When present, reject measurements sampled slower than the plan allows.
    #[serde(default)]
    pub plan: Option<UnoRateplan>,
}

impl ReconstructConfig {
    pub fn new(beta_x: f64, i_max: usize, seed: u64) -> Self {
        Self { beta_x, i_max, seed, early_stop: false, plan: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnoReconstruction {
    /// Unfolded signal; the `2λZ` offset is unresolved.
    pub signal: Vec<f64>,
    /// Kaczmarz estimate of the folded samples, clamped to `[-λ, λ)`.
    pub modulo_estimate: Vec<f64>,
    pub diff_order: usize,
    pub iterations: usize,
}

/// Telemetry record of one reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub nmse_modulo_db: f64,
    pub nmse_final_db: f64,
    pub h: Option<u32>,
    #[serde(rename = "N")]
    pub diff_order: usize,
    pub i_max: usize,
    pub seeds: Vec<u64>,
}

/// Largest double strictly below `v`.
fn below(v: f64) -> f64 {
    let bits = v.to_bits();
    if v > 0.0 {
        f64::from_bits(bits - 1)
    } else if v < 0.0 {
        f64::from_bits(bits + 1)
    } else {
        -f64::from_bits(1)
    }
}

/// Kaczmarz on the modulo polyhedron followed by unfolding.
pub fn uno_reconstruct(meas: &UnoMeasurements, cfg: &ReconstructConfig) -> Result<UnoReconstruction> {
    let lambda = meas.lambda;
    if let Some(plan) = &cfg.plan {
        if meas.dt > plan.dt_required * (1.0 + 1e-12) {
            return Err(Error::RateTooLow { dt: meas.dt, required: plan.dt_required });
        }
    }
    let order = min_diff_order(lambda, cfg.beta_x, meas.dt, meas.omega_max)?;
    let ucfg = UnfoldConfig::new(cfg.beta_x, order, meas.dt, meas.omega_max);
    ucfg.validate(lambda)?;

    let mut run = RkaRun::new(cfg.i_max, cfg.seed, meas.signs.n());
    run.early_stop = cfg.early_stop;
    let out = rka_solve(&meas.signs, &meas.thresholds, &run)?;
    let top = below(lambda);
    let modulo_estimate: Vec<f64> = out.estimate.iter().map(|v| v.clamp(-lambda, top)).collect();
    let folded = crate::modulo::ModuloSamples::new(modulo_estimate.clone(), lambda)?;
    let signal = unfold(&folded, &ucfg)?;
    Ok(UnoReconstruction { signal, modulo_estimate, diff_order: order, iterations: out.iterations })
}

fn check_plan_inputs(beta_x: f64, lambda: f64, e_inf: f64, omega_max: f64, zeta: f64) -> Result<()> {
    if !(lambda > 0.0 && beta_x > 0.0 && omega_max > 0.0) {
        return Err(invalid("beta_x, lambda and omega_max must be positive"));
    }
    if !(e_inf >= 0.0) {
        return Err(invalid(format!("error bound must be non-negative, got {e_inf}")));
    }
    if !(zeta > 1.0) {
        return Err(invalid(format!("zeta must exceed 1, got {zeta}")));
    }
    Ok(())
}

/// Oversampling exponent and sampling interval that make unfolding succeed
/// despite a sup-norm error `e_inf` in the recovered folded samples.
pub fn plan_rate(beta_x: f64, lambda: f64, e_inf: f64, omega_max: f64, zeta: f64) -> Result<UnoRateplan> {
    check_plan_inputs(beta_x, lambda, e_inf, omega_max, zeta)?;
    let bound = 4.0 * zeta * e_inf;
    if lambda < bound {
        return Err(Error::ThresholdTooSmall { lambda, bound });
    }
    let raw = (2.0 * beta_x / lambda).ln() / (lambda / (4.0 * e_inf)).ln();
    let h = crate::modulo::ceil_tol(raw).max(1.0) as u32;
    let dt_required = 1.0 / (2f64.powi(h as i32) * omega_max * E);
    Ok(UnoRateplan { h, dt_required, zeta, e_inf })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::onebit::quantize_values;
    use crate::signals::gen_bandlimited_random;

    #[test]
    fn plan_examples() {
        let p = plan_rate(4.0, 1.0, 0.05, 100.0, 2.0).unwrap();
        assert_eq!(p.h, 2);
        assert_eq!(p.dt_required, 1.0 / (4.0 * 100.0 * E));
        assert!(matches!(plan_rate(4.0, 4.0 * 1.0001 * 0.05, 0.05, 100.0, 1.5), Err(Error::ThresholdTooSmall { .. })));
        assert!(plan_rate(4.0, 1.0, 0.05, 100.0, 1.0).is_err());
        assert_eq!(plan_rate(4.0, 1.0, 0.0, 100.0, 2.0).unwrap().h, 1);
        assert_eq!(plan_rate(4.0, 1.0, 1e-300, 100.0, 2.0).unwrap().h, 1);
    }

    #[test]
    fn below_is_strict() {
        assert!(below(0.5) < 0.5);
        assert_eq!(below(0.5).to_bits(), 0.5f64.to_bits() - 1);
        assert!(below(-1.0) < -1.0);
    }

    #[test]
    fn small_signal_high_thresholds() {
        let x = SampledSignal::new(vec![0.3, 0.2, 0.35], 1e-3, 10.0).unwrap();
        let meas = uno_sample(&x, 1.0, 4, 3).unwrap();
        let low = ThresholdEnsemble::from_columns(&vec![vec![-5.0; 3]; 4], 1.0 / 3.0, 0).unwrap();
        assert!(quantize_values(x.samples(), &low).unwrap().signs().iter().all(|&s| s == 1));
        assert_eq!(meas.thresholds.sigma_tau(), 1.0 / 3.0);
        assert!(uno_sample(&x, 1.0, 0, 3).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let x = gen_bandlimited_random(256, 50.0, 1e-3, 8.0, 1).unwrap();
        let a = uno_sample(&x, 1.0, 40, 9).unwrap();
        let b = uno_sample(&x, 1.0, 40, 9).unwrap();
        assert_eq!(a.signs, b.signs);
    }

    #[test]
    fn rate_check_rejects_slow_sampling() {
        let x = gen_bandlimited_random(256, 50.0, 1e-3, 1.5, 1).unwrap();
        let meas = uno_sample(&x, 1.0, 4, 9).unwrap();
        let mut cfg = ReconstructConfig::new(2.0, 100, 0);
        cfg.plan = Some(UnoRateplan { h: 3, dt_required: 5e-4, zeta: 2.0, e_inf: 0.1 });
        assert!(matches!(uno_reconstruct(&meas, &cfg), Err(Error::RateTooLow { .. })));
    }
}
