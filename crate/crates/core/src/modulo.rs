//! Self-reset ADC folding and recovery of the unfolded signal from
//! higher-order differences.

use std::f64::consts::E;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::signals::{read_series, write_series};

/// Folded samples in `[-λ, λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuloSamples {
    values: Vec<f64>,
    lambda: f64,
}

/// JSON header accompanying a modulo-sample CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuloHeader {
    pub n: usize,
    pub lambda: f64,
    pub dt: f64,
    pub seed: Option<u64>,
}

impl ModuloSamples {
    pub fn new(values: Vec<f64>, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if let Some(v) = values.iter().find(|v| !(-lambda..lambda).contains(*v)) {
            return Err(invalid(format!("value {v} outside [-{lambda}, {lambda})")));
        }
        Ok(Self { values, lambda })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn header(&self, dt: f64, seed: Option<u64>) -> ModuloHeader {
        ModuloHeader { n: self.len(), lambda: self.lambda, dt, seed }
    }

    pub fn write_csv<W: Write>(&self, w: W, dt: f64) -> Result<()> {
        write_series(w, &self.values, dt)
    }

    pub fn read_csv<R: Read>(header: &ModuloHeader, r: R) -> Result<Self> {
        let values = read_series(r)?;
        if values.len() != header.n {
            return Err(Error::Parse(format!("header declares {} samples, body has {}", header.n, values.len())));
        }
        Self::new(values, header.lambda)
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("lambda must be positive, got {lambda}")))
    }
}

/// Centered modulo of a single value.
pub fn fold_value(x: f64, lambda: f64) -> f64 {
    let two = 2.0 * lambda;
    let mut v = x - two * (x / two + 0.5).floor();
    // Guard the half-open range against rounding at the edges.
    if v >= lambda {
        v -= two;
    } else if v < -lambda {
        v += two;
    }
    v
}

/// `x − 2λ⌊x/(2λ) + 1/2⌋` applied elementwise.
pub fn fold(x: &[f64], lambda: f64) -> Result<ModuloSamples> {
    check_lambda(lambda)?;
    Ok(ModuloSamples { values: x.iter().map(|&v| fold_value(v, lambda)).collect(), lambda })
}

/// Unfolding parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnfoldConfig {
    pub beta_x: f64,
    pub diff_order: usize,
    pub dt: f64,
    pub omega_max: f64,
}

impl UnfoldConfig {
    pub fn new(beta_x: f64, diff_order: usize, dt: f64, omega_max: f64) -> Self {
        Self { beta_x, diff_order, dt, omega_max }
    }

    /// Config with the difference order chosen by [`min_diff_order`].
    pub fn for_rate(lambda: f64, beta_x: f64, dt: f64, omega_max: f64) -> Result<Self> {
        let n = min_diff_order(lambda, beta_x, dt, omega_max)?;
        Ok(Self::new(beta_x, n, dt, omega_max))
    }

    /// Averaging window of the offset correction, `6β/λ`.
    pub fn window(&self, lambda: f64) -> usize {
        (6.0 * self.beta_x / lambda).round() as usize
    }

    pub fn validate(&self, lambda: f64) -> Result<()> {
        check_lambda(lambda)?;
        if self.diff_order == 0 {
            return Err(Error::ConfigInvalid("diff_order must be at least 1".into()));
        }
        let ratio = self.beta_x / (2.0 * lambda);
        if !(ratio >= 1.0 - 1e-9) || (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::ConfigInvalid(format!(
                "beta_x = {} is not a positive multiple of 2λ = {}",
                self.beta_x,
                2.0 * lambda
            )));
        }
        Ok(())
    }
}

/// Smallest element of `2λZ` (at least `2λ`) that is `≥ sup`.
pub fn beta_for_sup(sup: f64, lambda: f64) -> f64 {
    let k = (sup / (2.0 * lambda) - 1e-12).ceil().max(1.0);
    2.0 * lambda * k
}

/// `ceil` that ignores rounding noise just above an integer.
pub(crate) fn ceil_tol(v: f64) -> f64 {
    (v - 1e-9).ceil()
}

/// `N = ⌈(log λ − log β)/log(dt·Ω·e)⌉`, at least 1.
pub fn min_diff_order(lambda: f64, beta_x: f64, dt: f64, omega_max: f64) -> Result<usize> {
    check_lambda(lambda)?;
    if !(beta_x >= lambda) {
        return Err(invalid(format!("beta_x = {beta_x} must be at least λ = {lambda}")));
    }
    let rate = dt * omega_max * E;
    if !(rate > 0.0) {
        return Err(invalid("dt and omega_max must be positive"));
    }
    if rate >= 1.0 {
        return Err(invalid(format!("dt·Ω·e = {rate} is not below 1; sampling rate too low")));
    }
    let n = ceil_tol((lambda.ln() - beta_x.ln()) / rate.ln());
    Ok(n.max(1.0) as usize)
}

/// `order`-th forward difference; the output is `order` samples shorter.
pub fn finite_diff(v: &[f64], order: usize) -> Result<Vec<f64>> {
    if order == 0 || v.len() <= order {
        return Err(invalid(format!("need len > order >= 1, got len {} and order {order}", v.len())));
    }
    let mut out = v.to_vec();
    for _ in 0..order {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(out)
}

/// Running prefix sum (same length).
pub fn inverse_diff(s: &[f64]) -> Vec<f64> {
    s.iter()
        .scan(0.0, |acc, &v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// Prefix sum with a zero initial condition: one sample longer than `s`, and
/// its first difference is exactly `s`.
fn anti_diff(s: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(s.len() + 1);
    out.push(0.0);
    out.extend(inverse_diff(s));
    out
}

fn round_to_lattice(s: &mut [f64], lambda: f64) {
    for v in s.iter_mut() {
        *v = 2.0 * lambda * ((*v / lambda).floor() / 2.0).ceil();
    }
}

/// Recovers `x` from its folded samples, up to a constant in `2λZ`.
///
/// The first output sample carries no correction, i.e. the unknown offset is
/// resolved as if the first sample had not folded; see [`align_offset`].
pub fn unfold(m: &ModuloSamples, cfg: &UnfoldConfig) -> Result<Vec<f64>> {
    let lambda = m.lambda;
    cfg.validate(lambda)?;
    let order = cfg.diff_order;
    let n = m.len();
    if n <= order {
        return Err(Error::LengthTooShort { needed: order + 1, got: n });
    }
    let dx = finite_diff(&m.values, order)?;
    // Δ^N ε = M_λ(Δ^N x̃) − Δ^N x̃
    let mut s: Vec<f64> = dx.iter().map(|&d| fold_value(d, lambda) - d).collect();

    let window = cfg.window(lambda);
    for _ in 0..order - 1 {
        s = anti_diff(&s);
        round_to_lattice(&mut s, lambda);
        if s.len() < window + 1 {
            return Err(Error::LengthTooShort { needed: window + order, got: n });
        }
        let t = inverse_diff(&s);
        let kappa = ((t[0] - t[window]) / (12.0 * cfg.beta_x) + 0.5).floor();
        for v in s.iter_mut() {
            *v += 2.0 * lambda * kappa;
        }
    }
    let eps = anti_diff(&s);
    Ok(eps.iter().zip(&m.values).map(|(e, v)| e + v).collect())
}

/// Shifts `estimate` by the element of `2λZ` closest to its mean offset from
/// `truth`. Scoring only.
pub fn align_offset(truth: &[f64], estimate: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if truth.len() != estimate.len() {
        return Err(Error::ShapeMismatch(format!("truth has {} samples, estimate {}", truth.len(), estimate.len())));
    }
    if truth.is_empty() {
        return Ok(Vec::new());
    }
    let mean = truth.iter().zip(estimate).map(|(t, e)| t - e).sum::<f64>() / truth.len() as f64;
    let shift = 2.0 * lambda * (mean / (2.0 * lambda)).round();
    Ok(estimate.iter().map(|e| e + shift).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_examples() {
        assert_eq!(fold(&[0.3], 0.5).unwrap().values(), &[0.3]);
        assert!((fold(&[0.6], 0.5).unwrap().values()[0] + 0.4).abs() < 1e-15);
        assert_eq!(fold(&[0.5], 0.5).unwrap().values(), &[-0.5]);
        assert_eq!(fold(&[-0.5], 0.5).unwrap().values(), &[-0.5]);
        assert!(fold(&[1.0], 0.0).is_err());
    }

    #[test]
    fn diff_order_examples() {
        // dt·Ω·e = 0.5
        let dt = 1e-3;
        let omega = 0.5 / (E * dt);
        assert_eq!(min_diff_order(1.0, 4.0, dt, omega).unwrap(), 2);
        assert_eq!(min_diff_order(1.0, 1.0, dt, omega).unwrap(), 1);
        assert!(min_diff_order(1.0, 4.0, dt, 1.1 / (E * dt)).is_err());
    }

    #[test]
    fn difference_examples() {
        assert_eq!(finite_diff(&[1.0, 2.0, 4.0], 1).unwrap(), vec![1.0, 2.0]);
        assert_eq!(finite_diff(&[1.0, 2.0, 4.0], 2).unwrap(), vec![1.0]);
        assert_eq!(finite_diff(&[3.0; 5], 1).unwrap(), vec![0.0; 4]);
        assert!(finite_diff(&[1.0, 2.0], 2).is_err());
        assert_eq!(inverse_diff(&[1.0, 1.0, 1.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(inverse_diff(&[0.0; 4]), vec![0.0; 4]);
        let s = [0.25, -1.5, 3.0, 0.125];
        assert_eq!(finite_diff(&anti_diff(&s), 1).unwrap(), s.to_vec());
    }

    #[test]
    fn lattice_rounding_matches_formula() {
        let lambda = 0.5;
        let mut s = vec![0.0, 0.999, 1.0, 1.2, -0.2, -1.0, 2.0 - 1e-12];
        round_to_lattice(&mut s, lambda);
        assert_eq!(s, vec![0.0, 1.0, 1.0, 1.0, 0.0, -1.0, 2.0]);
    }

    #[test]
    fn unfold_of_unfolded_input_is_identity() {
        let x: Vec<f64> = (0..50).map(|k| 0.4 * (k as f64 * 0.1).sin()).collect();
        let m = fold(&x, 0.5).unwrap();
        let cfg = UnfoldConfig::new(2.0, 2, 1e-3, 100.0);
        let y = unfold(&m, &cfg).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn unfold_validates_config() {
        let m = fold(&[0.1; 40], 0.5).unwrap();
        assert!(matches!(unfold(&m, &UnfoldConfig::new(2.5, 1, 1e-3, 1.0)), Err(Error::ConfigInvalid(_))));
        // window 6β/λ = 24 needs 25 samples of the first anti-difference
        let short = fold(&[0.1; 20], 0.5).unwrap();
        assert!(matches!(unfold(&short, &UnfoldConfig::new(2.0, 2, 1e-3, 1.0)), Err(Error::LengthTooShort { .. })));
    }

    #[test]
    fn align_examples() {
        let lambda = 0.5;
        let truth = vec![0.25, -0.75, 1.875];
        let est: Vec<f64> = truth.iter().map(|t| t + 4.0 * lambda).collect();
        assert_eq!(align_offset(&truth, &est, lambda).unwrap(), truth);
        assert_eq!(align_offset(&truth, &truth, lambda).unwrap(), truth);
        let noise = [1e-3, -2e-3, 5e-4];
        let est: Vec<f64> = truth.iter().zip(noise).map(|(t, e)| t + 2.0 * lambda + e).collect();
        let got = align_offset(&truth, &est, lambda).unwrap();
        for ((g, t), e) in got.iter().zip(&truth).zip(noise) {
            assert!((g - (t + e)).abs() < 1e-12);
        }
        assert!(align_offset(&truth, &[0.0], lambda).is_err());
    }

    #[test]
    fn beta_defaults_to_lattice() {
        assert_eq!(beta_for_sup(8.0, 0.5), 8.0);
        assert_eq!(beta_for_sup(8.1, 0.5), 9.0);
        assert_eq!(beta_for_sup(0.1, 0.5), 1.0);
        assert_eq!(beta_for_sup(8.0, 0.2), 8.0);
    }
}
