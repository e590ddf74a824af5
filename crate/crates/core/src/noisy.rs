//! Parameter recovery for a linear model observed through noisy UNO samples.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::modulo::fold_value;
use crate::rng::{self, stream};
use crate::signals::{brickwall_lowpass, SampledSignal};
use crate::uno::{plan_rate, uno_reconstruct, uno_sample, ReconstructConfig, UnoRateplan};

/// Largest condition-number estimate accepted for the shifted normal system.
pub const MAX_CONDITION: f64 = 1e12;

/// `y = Aθ + d + ε` with `ε ~ N(0, σ²I)`.
///
/// `d` is an optional fixed component of the clean signal outside the range
/// of `A` (zero for an exactly linear model).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    a: DMatrix<f64>,
    theta: DVector<f64>,
    sigma_eps: f64,
    residual: Option<DVector<f64>>,
}

impl LinearModel {
    pub fn new(a: DMatrix<f64>, theta: DVector<f64>, sigma_eps: f64) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(invalid("design matrix must be non-empty"));
        }
        if theta.len() != a.ncols() {
            return Err(Error::ShapeMismatch(format!("θ has {} entries, A has {} columns", theta.len(), a.ncols())));
        }
        if !(sigma_eps >= 0.0) {
            return Err(invalid(format!("noise std must be non-negative, got {sigma_eps}")));
        }
        Ok(Self { a, theta, sigma_eps, residual: None })
    }

    /// Fits `θ` to a target clean signal: least squares when `A` is tall,
    /// minimum norm when it is wide. Whatever `Aθ` cannot express is kept as
    /// the out-of-range residual, so the clean signal equals `target`.
    pub fn explaining(a: DMatrix<f64>, target: &[f64], sigma_eps: f64) -> Result<Self> {
        if target.len() != a.nrows() {
            return Err(Error::ShapeMismatch(format!("target has {} samples, A has {} rows", target.len(), a.nrows())));
        }
        let y = DVector::from_column_slice(target);
        let svd = a.clone().svd(true, true);
        let theta = svd.solve(&y, 1e-12).map_err(|e| invalid(e.to_string()))?;
        let d = &y - &a * &theta;
        let mut model = Self::new(a, theta, sigma_eps)?;
        model.residual = Some(d);
        Ok(model)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn sigma_eps(&self) -> f64 {
        self.sigma_eps
    }

    pub fn residual(&self) -> Option<&DVector<f64>> {
        self.residual.as_ref()
    }

    pub fn with_sigma(mut self, sigma_eps: f64) -> Self {
        self.sigma_eps = sigma_eps;
        self
    }

    /// `Aθ + d`.
    pub fn clean(&self) -> DVector<f64> {
        let x = &self.a * &self.theta;
        match &self.residual {
            Some(d) => x + d,
            None => x,
        }
    }
}

/// Noisy observation of the model, seeded.
pub fn simulate_noisy(model: &LinearModel, seed: u64) -> DVector<f64> {
    let mut y = model.clean();
    if model.sigma_eps > 0.0 {
        let normal = Normal::new(0.0, model.sigma_eps).expect("finite std");
        let mut rng = rng::rng(seed, stream::NOISE);
        for v in y.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    y
}

/// Splits the folded noise: returns `z̃` and `q ∈ {0,1}` with
/// `fold(x + z) = fold(x) + z̃` and `z̃ = mod(z, 2λ) − 2(1−q)λ`.
pub fn modulo_noise_decompose(x: &[f64], z: &[f64], lambda: f64) -> Result<(Vec<f64>, Vec<u8>)> {
    if x.len() != z.len() {
        return Err(Error::ShapeMismatch(format!("x has {} samples, z {}", x.len(), z.len())));
    }
    if !(lambda > 0.0) {
        return Err(invalid(format!("lambda must be positive, got {lambda}")));
    }
    let two = 2.0 * lambda;
    let mut zt = Vec::with_capacity(x.len());
    let mut qs = Vec::with_capacity(x.len());
    for (index, (&xv, &zv)) in x.iter().zip(z).enumerate() {
        let target = fold_value(xv + zv, lambda);
        let base = fold_value(xv, lambda);
        let modz = zv - two * (zv / two).floor();
        let hit = [1u8, 0].into_iter().find_map(|q| {
            let cand = modz - two * f64::from(1 - q);
            ((base + cand - target).abs() <= 1e-9).then_some((cand, q))
        });
        let (cand, q) = hit.ok_or(Error::DecompositionFailed { index })?;
        zt.push(cand);
        qs.push(q);
    }
    Ok((zt, qs))
}

/// [`plan_rate`] with the Kaczmarz error replaced by the sup-norm of the
/// filtered folded noise plus Kaczmarz error.
pub fn plan_noisy_rate(
    beta_x: f64,
    lambda: f64,
    z_tilde_plus_e_inf: f64,
    omega_max: f64,
    zeta: f64,
) -> Result<UnoRateplan> {
    plan_rate(beta_x, lambda, z_tilde_plus_e_inf, omega_max, zeta)
}

/// A deterministic map from parameter vectors to parameter vectors.
pub trait Denoiser: Send + Sync + fmt::Debug {
    fn denoise(&self, v: &DVector<f64>) -> DVector<f64>;
}

/// Proximal map of `t‖·‖₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftThreshold {
    pub level: f64,
}

impl Denoiser for SoftThreshold {
    fn denoise(&self, v: &DVector<f64>) -> DVector<f64> {
        v.map(|x| x.signum() * (x.abs() - self.level).max(0.0))
    }
}

/// Centered moving average with a shrinking window at the edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MovingAverage {
    pub window: usize,
}

impl Denoiser for MovingAverage {
    fn denoise(&self, v: &DVector<f64>) -> DVector<f64> {
        let n = v.len();
        let half = self.window / 2;
        DVector::from_fn(n, |i, _| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            v.rows(lo, hi - lo).sum() / (hi - lo) as f64
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityDenoiser;

impl Denoiser for IdentityDenoiser {
    fn denoise(&self, v: &DVector<f64>) -> DVector<f64> {
        v.clone()
    }
}

/// Denoiser selection as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserSpec {
    pub kind: String,
    /// Kind-specific parameters; empty means defaults.
    #[serde(default)]
    pub params: Vec<f64>,
}

impl DenoiserSpec {
    pub fn new(kind: &str, params: Vec<f64>) -> Self {
        Self { kind: kind.to_string(), params }
    }
}

impl Default for DenoiserSpec {
    fn default() -> Self {
        Self::new("soft_threshold", Vec::new())
    }
}

type Factory = fn(&[f64], &AdmmConfig) -> Result<Box<dyn Denoiser>>;

/// Name → constructor table for denoisers.
#[derive(Clone)]
pub struct DenoiserRegistry {
    factories: BTreeMap<String, Factory>,
}

impl fmt::Debug for DenoiserRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}

impl Default for DenoiserRegistry {
    /// `soft_threshold` (level `params[0]`, default `η/β`), `moving_average`
    /// (window `params[0]`, default 3) and `identity`.
    fn default() -> Self {
        let mut r = Self { factories: BTreeMap::new() };
        r.register("soft_threshold", |p, cfg| {
            let level = p.first().copied().unwrap_or(cfg.eta / cfg.beta);
            if !(level >= 0.0) {
                return Err(invalid(format!("shrinkage level must be non-negative, got {level}")));
            }
            Ok(Box::new(SoftThreshold { level }))
        });
        r.register("moving_average", |p, _| {
            let w = p.first().copied().unwrap_or(3.0);
            if !(w >= 1.0) {
                return Err(invalid(format!("window must be at least 1, got {w}")));
            }
            Ok(Box::new(MovingAverage { window: w as usize }))
        });
        r.register("identity", |_, _| Ok(Box::new(IdentityDenoiser)));
        r
    }
}

impl DenoiserRegistry {
    pub fn register(&mut self, kind: &str, factory: Factory) {
        self.factories.insert(kind.to_string(), factory);
    }

    pub fn build(&self, cfg: &AdmmConfig) -> Result<Box<dyn Denoiser>> {
        let f =
            self.factories.get(&cfg.denoiser.kind).ok_or_else(|| Error::UnknownDenoiser(cfg.denoiser.kind.clone()))?;
        f(&cfg.denoiser.params, cfg)
    }

    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    pub eta: f64,
    pub beta: f64,
    pub k_max: usize,
    #[serde(default)]
    pub denoiser: DenoiserSpec,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self { eta: 0.1, beta: 1.0, k_max: 100, denoiser: DenoiserSpec::default() }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::ConfigInvalid(format!("ADMM penalty must be positive, got {}", self.beta)));
        }
        if !(self.eta >= 0.0) {
            return Err(Error::ConfigInvalid(format!("η must be non-negative, got {}", self.eta)));
        }
        if self.k_max == 0 {
            return Err(Error::ConfigInvalid("k_max must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmOutcome {
    pub theta: DVector<f64>,
    /// `‖ȳ − Aθ_k‖` after each iteration.
    pub residuals: Vec<f64>,
}

/// Plug-and-play ADMM with the default denoiser registry.
pub fn pnp_admm(y_bar: &DVector<f64>, a: &DMatrix<f64>, cfg: &AdmmConfig, init: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(pnp_admm_with(&DenoiserRegistry::default(), y_bar, a, cfg, init)?.theta)
}

/// Plug-and-play ADMM; `init` seeds the splitting variable `ν₀` (`u₀ = 0`).
///
/// θ-step: `(2AᵀA + βI)θ = 2Aᵀȳ + β(ν − u)`, ν-step: `ν = D(θ + u)`,
/// dual step: `u ← u + θ − ν`.
pub fn pnp_admm_with(
    registry: &DenoiserRegistry,
    y_bar: &DVector<f64>,
    a: &DMatrix<f64>,
    cfg: &AdmmConfig,
    init: &DVector<f64>,
) -> Result<AdmmOutcome> {
    cfg.validate()?;
    if y_bar.len() != a.nrows() || init.len() != a.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "A is {}×{}, ȳ has {} entries, init {}",
            a.nrows(),
            a.ncols(),
            y_bar.len(),
            init.len()
        )));
    }
    let denoiser = registry.build(cfg)?;
    let s = a.ncols();
    // λ_min ≥ β and λ_max ≤ 2‖A‖_F² + β bound the condition number.
    let condition = 1.0 + 2.0 * a.norm_squared() / cfg.beta;
    if !(condition <= MAX_CONDITION) {
        return Err(Error::NumericalFailure { condition });
    }
    let mut m = a.tr_mul(a) * 2.0;
    for i in 0..s {
        m[(i, i)] += cfg.beta;
    }
    let chol = m.cholesky().ok_or(Error::NumericalFailure { condition })?;
    let aty = a.tr_mul(y_bar) * 2.0;

    let mut nu = init.clone();
    let mut u = DVector::zeros(s);
    let mut theta = DVector::zeros(s);
    let mut residuals = Vec::with_capacity(cfg.k_max);
    for _ in 0..cfg.k_max {
        theta = chol.solve(&(&aty + (&nu - &u) * cfg.beta));
        nu = denoiser.denoise(&(&theta + &u));
        u += &theta - &nu;
        residuals.push((y_bar - a * &theta).norm());
    }
    Ok(AdmmOutcome { theta, residuals })
}

/// Settings for [`noisy_uno`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyUnoConfig {
    pub lambda: f64,
    pub m: usize,
    pub beta_x: f64,
    pub dt: f64,
    pub omega_max: f64,
    pub i_max: usize,
    pub early_stop: bool,
    /// Low-pass the noisy signal at `omega_max` before folding.
    pub prefilter: bool,
    /// Ridge weight, relative to the mean diagonal of `AᵀA`, of the pilot fit
    /// used to resolve the `2λZ` offset.
    pub pilot_ridge: f64,
    /// Optional bound on `‖z̃_φ + e‖_∞`; when given, λ is checked against it.
    #[serde(default)]
    pub noise_bound: Option<f64>,
    pub admm: AdmmConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoisySeeds {
    pub noise: u64,
    pub thresholds: u64,
    pub kaczmarz: u64,
}

impl NoisySeeds {
    pub fn from_base(seed: u64) -> Self {
        Self { noise: seed, thresholds: seed, kaczmarz: seed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyUnoOutput {
    pub theta: DVector<f64>,
    /// Unfolded, offset-resolved observation handed to ADMM.
    pub y_bar: DVector<f64>,
    pub diff_order: usize,
    pub iterations: usize,
}

/// Noisy observation → UNO sampling → Kaczmarz → unfolding → offset
/// resolution → plug-and-play ADMM.
pub fn noisy_uno(model: &LinearModel, cfg: &NoisyUnoConfig, seeds: NoisySeeds) -> Result<NoisyUnoOutput> {
    noisy_uno_with(&DenoiserRegistry::default(), model, cfg, seeds)
}

pub fn noisy_uno_with(
    registry: &DenoiserRegistry,
    model: &LinearModel,
    cfg: &NoisyUnoConfig,
    seeds: NoisySeeds,
) -> Result<NoisyUnoOutput> {
    cfg.admm.validate()?;
    let mut out = unfold_noisy(model, cfg, seeds)?;
    let a = model.a();
    out.theta = pnp_admm_with(registry, &out.y_bar, a, &cfg.admm, &DVector::zeros(a.ncols()))?.theta;
    Ok(out)
}

/// Every stage of [`noisy_uno`] before ADMM; `theta` is left empty.
pub fn unfold_noisy(model: &LinearModel, cfg: &NoisyUnoConfig, seeds: NoisySeeds) -> Result<NoisyUnoOutput> {
    if let Some(bound) = cfg.noise_bound {
        plan_noisy_rate(cfg.beta_x, cfg.lambda, bound, cfg.omega_max, 1.0 + 1e-9)?;
    }
    let y = simulate_noisy(model, seeds.noise);
    let observed =
        if cfg.prefilter { brickwall_lowpass(y.as_slice(), cfg.dt, cfg.omega_max) } else { y.as_slice().to_vec() };
    let signal = SampledSignal::new(observed, cfg.dt, cfg.omega_max)?;
    let meas = uno_sample(&signal, cfg.lambda, cfg.m, seeds.thresholds)?;
    let mut rcfg = ReconstructConfig::new(cfg.beta_x, cfg.i_max, seeds.kaczmarz);
    rcfg.early_stop = cfg.early_stop;
    let rec = uno_reconstruct(&meas, &rcfg)?;

    let mut y_bar = DVector::from_vec(rec.signal);
    let shift = resolve_offset(model.a(), &y_bar, cfg.lambda, cfg.pilot_ridge);
    y_bar.add_scalar_mut(-shift);
    Ok(NoisyUnoOutput { theta: DVector::zeros(0), y_bar, diff_order: rec.diff_order, iterations: rec.iterations })
}

/// Element of `2λZ` nearest to the mean residual of a ridge fit of `ȳ`.
fn resolve_offset(a: &DMatrix<f64>, y_bar: &DVector<f64>, lambda: f64, ridge: f64) -> f64 {
    let s = a.ncols();
    let mut g = a.tr_mul(a);
    let rho = ridge * g.trace() / s as f64;
    for i in 0..s {
        g[(i, i)] += rho;
    }
    let fitted = match g.cholesky() {
        Some(c) => a * c.solve(&a.tr_mul(y_bar)),
        None => DVector::zeros(a.nrows()),
    };
    let mean = (y_bar - fitted).mean();
    2.0 * lambda * (mean / (2.0 * lambda)).round()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decomposition_examples() {
        let (zt, q) = modulo_noise_decompose(&[0.5], &[1.2], 1.0).unwrap();
        assert!((zt[0] + 0.8).abs() < 1e-12);
        assert_eq!(q, vec![0]);
        assert!((fold_value(1.7, 1.0) + 0.3).abs() < 1e-12);
        let (zt, q) = modulo_noise_decompose(&[0.5], &[0.0], 1.0).unwrap();
        assert_eq!((zt[0], q[0]), (0.0, 1));
    }

    #[test]
    fn soft_threshold_examples() {
        let d = SoftThreshold { level: 0.5 };
        let out = d.denoise(&DVector::from_vec(vec![1.5, -0.3, -2.0]));
        assert_eq!(out.as_slice(), &[1.0, 0.0, -1.5]);
    }

    #[test]
    fn identity_fixed_point() {
        let a = DMatrix::identity(4, 4);
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let cfg = AdmmConfig { k_max: 1, denoiser: DenoiserSpec::new("identity", vec![]), ..Default::default() };
        let th = pnp_admm(&y, &a, &cfg, &y).unwrap();
        assert!((th - &y).amax() < 1e-12);
    }

    #[test]
    fn registry_lookup() {
        let reg = DenoiserRegistry::default();
        assert_eq!(reg.kinds().collect::<Vec<_>>(), vec!["identity", "moving_average", "soft_threshold"]);
        let cfg = AdmmConfig { denoiser: DenoiserSpec::new("wavelet", vec![]), ..Default::default() };
        assert!(matches!(reg.build(&cfg), Err(Error::UnknownDenoiser(_))));
        let ma = MovingAverage { window: 3 }.denoise(&DVector::from_vec(vec![3.0, 0.0, 3.0, 6.0]));
        assert_eq!(ma.as_slice(), &[1.5, 2.0, 3.0, 4.5]);
    }

    #[test]
    fn plan_noisy_matches_plan() {
        assert_eq!(plan_noisy_rate(4.0, 1.0, 0.05, 100.0, 2.0).unwrap().h, 2);
        assert_eq!(plan_noisy_rate(4.0, 1.0, 0.0, 100.0, 2.0).unwrap().h, 1);
        assert!(plan_noisy_rate(4.0, 1.0, 0.2, 100.0, 2.0).is_err());
    }

    #[test]
    fn noiseless_simulation_is_exact() {
        let a = DMatrix::from_fn(5, 3, |i, j| (i + 2 * j) as f64);
        let th = DVector::from_vec(vec![1.0, -1.0, 0.5]);
        let m = LinearModel::new(a.clone(), th.clone(), 0.0).unwrap();
        assert_eq!(simulate_noisy(&m, 3), &a * &th);
        let noisy = m.with_sigma(0.1);
        assert_eq!(simulate_noisy(&noisy, 3), simulate_noisy(&noisy, 3));
        assert_ne!(simulate_noisy(&noisy, 3), simulate_noisy(&noisy, 4));
    }

    #[test]
    fn explaining_reproduces_target() {
        let a = DMatrix::from_fn(6, 2, |i, j| ((i * 3 + j * 5) % 7) as f64 - 3.0);
        let target = [0.1, -0.4, 0.9, 0.3, -0.2, 0.5];
        let m = LinearModel::explaining(a.clone(), &target, 0.0).unwrap();
        for (c, t) in m.clean().iter().zip(target) {
            assert!((c - t).abs() < 1e-12);
        }
        // the residual is orthogonal to the columns
        assert!(a.tr_mul(m.residual().unwrap()).amax() < 1e-12);
    }
}
