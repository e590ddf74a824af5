//! One-bit comparisons against random thresholds and randomized Kaczmarz
//! recovery from the resulting sign pattern.
//!
//! Data layout: an `n×m` matrix is stored column-major, so the flat index
//! `j = ℓ·n + k` addresses sample `k` of threshold sequence `ℓ`. This is the
//! `vec(·)` ordering of the stacked sign operator `Ω̃`, whose row `j` is
//! `r_{k,ℓ}·e_k`.

use std::io::{BufRead, Read, Write};

use rand::Rng;
use rand_distr::{weighted::WeightedIndex, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::modulo::{ceil_tol, ModuloSamples};
use crate::rng::{self, stream};

/// Violation below which a sweep counts as feasible for early stopping.
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// `m` threshold sequences of length `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdEnsemble {
    n: usize,
    m: usize,
    gamma: Vec<f64>,
    sigma_tau: f64,
    seed: u64,
}

impl ThresholdEnsemble {
    /// I.i.d. `N(0, σ²)` thresholds.
    pub fn gaussian(n: usize, m: usize, sigma_tau: f64, seed: u64) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(invalid(format!("need n, m >= 1, got n={n}, m={m}")));
        }
        let normal = Normal::new(0.0, sigma_tau).map_err(|_| invalid(format!("bad threshold std {sigma_tau}")))?;
        let mut rng = rng::rng(seed, stream::THRESHOLDS);
        let gamma = (0..n * m).map(|_| normal.sample(&mut rng)).collect();
        Ok(Self { n, m, gamma, sigma_tau, seed })
    }

    /// Thresholds from explicit columns, each of length `n`.
    pub fn from_columns(columns: &[Vec<f64>], sigma_tau: f64, seed: u64) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if n == 0 || columns.iter().any(|c| c.len() != n) {
            return Err(Error::ShapeMismatch("threshold columns must share a nonzero length".into()));
        }
        let gamma = columns.iter().flatten().copied().collect();
        Ok(Self { n, m: columns.len(), gamma, sigma_tau, seed })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn sigma_tau(&self) -> f64 {
        self.sigma_tau
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Flat column-major storage.
    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.gamma[l * self.n + k]
    }

    pub fn column(&self, l: usize) -> &[f64] {
        &self.gamma[l * self.n..(l + 1) * self.n]
    }

    pub fn negated(&self) -> Self {
        Self { gamma: self.gamma.iter().map(|v| -v).collect(), ..self.clone() }
    }
}

/// Thresholds with `σ_τ = λ/3`.
pub fn design_thresholds(lambda: f64, n: usize, m: usize, seed: u64) -> Result<ThresholdEnsemble> {
    if !(lambda > 0.0) {
        return Err(invalid(format!("lambda must be positive, got {lambda}")));
    }
    ThresholdEnsemble::gaussian(n, m, lambda / 3.0, seed)
}

/// `n×m` matrix of ±1 comparison outcomes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignMatrix {
    n: usize,
    m: usize,
    signs: Vec<i8>,
}

/// JSON header of the packed sign format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignHeader {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub lambda: f64,
}

impl SignMatrix {
    /// Builds from column-major ±1 entries.
    pub fn new(n: usize, m: usize, signs: Vec<i8>) -> Result<Self> {
        if n == 0 || m == 0 || signs.len() != n * m {
            return Err(Error::ShapeMismatch(format!("{} entries for a {n}×{m} sign matrix", signs.len())));
        }
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(invalid("sign entries must be exactly ±1"));
        }
        Ok(Self { n, m, signs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Flat column-major storage.
    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn get(&self, k: usize, l: usize) -> i8 {
        self.signs[l * self.n + k]
    }

    pub fn negated(&self) -> Self {
        Self { signs: self.signs.iter().map(|s| -s).collect(), ..self.clone() }
    }

    /// Rows of the stacked operator as `(coordinate, sign)`.
    pub fn stacked_rows(&self) -> impl Iterator<Item = (usize, i8)> + '_ {
        self.signs.iter().enumerate().map(move |(j, &s)| (j % self.n, s))
    }

    /// One JSON header line, then the samples row-major (`k·m + ℓ`), one bit
    /// each, most significant bit first, `+1 → 1`.
    pub fn write_packed<W: Write>(&self, mut w: W, seed: u64, lambda: f64) -> Result<()> {
        let header = SignHeader { n: self.n, m: self.m, seed, lambda };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        let mut bytes = vec![0u8; (self.n * self.m).div_ceil(8)];
        for k in 0..self.n {
            for l in 0..self.m {
                if self.get(k, l) > 0 {
                    let bit = k * self.m + l;
                    bytes[bit / 8] |= 0x80 >> (bit % 8);
                }
            }
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_packed<R: BufRead>(mut r: R) -> Result<(SignHeader, Self)> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: SignHeader = serde_json::from_str(line.trim_end())?;
        let (n, m) = (header.n, header.m);
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != (n * m).div_ceil(8) {
            return Err(Error::Parse(format!("expected {} packed bytes, got {}", (n * m).div_ceil(8), bytes.len())));
        }
        let mut signs = vec![-1i8; n * m];
        for k in 0..n {
            for l in 0..m {
                let bit = k * m + l;
                if bytes[bit / 8] & (0x80 >> (bit % 8)) != 0 {
                    signs[l * n + k] = 1;
                }
            }
        }
        Ok((header, Self::new(n, m, signs)?))
    }

    /// `n` lines of `m` comma-separated ±1 values.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for k in 0..self.n {
            wr.write_record((0..self.m).map(|l| self.get(k, l).to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
        let mut rows: Vec<Vec<i8>> = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| s.trim().parse::<i8>().map_err(|e| Error::Parse(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Parse("ragged sign CSV".into()));
        }
        let mut signs = vec![0i8; n * m];
        for (k, row) in rows.iter().enumerate() {
            for (l, &s) in row.iter().enumerate() {
                signs[l * n + k] = s;
            }
        }
        Self::new(n, m, signs)
    }
}

/// `r_{k,ℓ} = +1` if `x̃_k ≥ τ_{k,ℓ}`, else `−1`.
pub fn quantize(xt: &ModuloSamples, thr: &ThresholdEnsemble) -> Result<SignMatrix> {
    quantize_values(xt.values(), thr)
}

/// [`quantize`] for samples that were not folded.
pub fn quantize_values(x: &[f64], thr: &ThresholdEnsemble) -> Result<SignMatrix> {
    if x.len() != thr.n {
        return Err(Error::ShapeMismatch(format!("{} samples against thresholds of length {}", x.len(), thr.n)));
    }
    let signs = thr.gamma.iter().enumerate().map(|(j, &tau)| if x[j % thr.n] >= tau { 1 } else { -1 }).collect();
    Ok(SignMatrix { n: thr.n, m: thr.m, signs })
}

/// Dense `n×n` integer matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GramMatrix {
    pub n: usize,
    pub entries: Vec<i64>,
}

impl GramMatrix {
    pub fn get(&self, a: usize, b: usize) -> i64 {
        self.entries[a * self.n + b]
    }

    pub fn is_scaled_identity(&self, c: i64) -> bool {
        (0..self.n).all(|a| (0..self.n).all(|b| self.get(a, b) == if a == b { c } else { 0 }))
    }
}

/// `Ω̃ᵀΩ̃` accumulated over the rows of the stacked sign operator.
pub fn gram_check(r: &SignMatrix) -> GramMatrix {
    let n = r.n;
    let mut entries = vec![0i64; n * n];
    // Each stacked row has a single nonzero, so its outer product is one entry.
    for (k, s) in r.stacked_rows() {
        entries[k * n + k] += i64::from(s) * i64::from(s);
    }
    GramMatrix { n, entries }
}

/// Solver settings for [`rka_solve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RkaRun {
    pub i_max: usize,
    pub seed: u64,
    pub init: Vec<f64>,
    pub record_trace: bool,
    /// Record every `trace_stride`-th iterate (1 = all of them).
    pub trace_stride: usize,
    /// Stop after a full sweep of `mn` draws ends with max violation below
    /// [`FEASIBILITY_TOL`].
    pub early_stop: bool,
}

impl RkaRun {
    /// Zero initialization, no trace, no early stop.
    pub fn new(i_max: usize, seed: u64, n: usize) -> Self {
        Self { i_max, seed, init: vec![0.0; n], record_trace: false, trace_stride: 1, early_stop: false }
    }

    pub fn with_trace(mut self, stride: usize) -> Self {
        self.record_trace = true;
        self.trace_stride = stride.max(1);
        self
    }

    pub fn with_early_stop(mut self) -> Self {
        self.early_stop = true;
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.i_max == 0 {
            return Err(invalid("i_max must be at least 1"));
        }
        if self.init.len() != n {
            return Err(Error::ShapeMismatch(format!("init has length {}, expected {n}", self.init.len())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// Number of updates applied before the measurement.
    pub iteration: usize,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RkaOutcome {
    pub estimate: Vec<f64>,
    pub trace: Vec<TracePoint>,
    /// Updates actually performed (less than `i_max` after an early stop).
    pub iterations: usize,
}

/// The one-bit polyhedron `{x : Ω̃x ⪰ vec(R)⊙vec(Γ)}`, written as `Cx ⪯ b`
/// with `c_j = −ω_j` and `b_j = −r_j τ_j`.
#[derive(Debug, Clone, Copy)]
pub struct SignPolyhedron<'a> {
    signs: &'a SignMatrix,
    thr: &'a ThresholdEnsemble,
}

impl<'a> SignPolyhedron<'a> {
    pub fn new(signs: &'a SignMatrix, thr: &'a ThresholdEnsemble) -> Result<Self> {
        if signs.n != thr.n || signs.m != thr.m {
            return Err(Error::ShapeMismatch(format!(
                "signs are {}×{}, thresholds {}×{}",
                signs.n, signs.m, thr.n, thr.m
            )));
        }
        Ok(Self { signs, thr })
    }

    pub fn n(&self) -> usize {
        self.signs.n
    }

    pub fn rows(&self) -> usize {
        self.signs.n * self.signs.m
    }

    /// `c_j x − b_j`; positive means row `j` is violated.
    pub fn residual(&self, x: &[f64], j: usize) -> f64 {
        let r = f64::from(self.signs.signs[j]);
        -r * x[j % self.signs.n] - (-r * self.thr.gamma[j])
    }

    /// Projects `x` onto the half-space of row `j`; returns the step `β`.
    pub fn project(&self, x: &mut [f64], j: usize) -> f64 {
        let beta = self.residual(x, j).max(0.0);
        let r = f64::from(self.signs.signs[j]);
        x[j % self.signs.n] -= beta * -r;
        beta
    }

    /// Per-coordinate feasible interval `[lo, hi]`; rows with `r = +1` bound
    /// from below and rows with `r = −1` from above.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        let mut b = vec![(f64::NEG_INFINITY, f64::INFINITY); self.signs.n];
        for (j, (&s, &tau)) in self.signs.signs.iter().zip(&self.thr.gamma).enumerate() {
            let e = &mut b[j % self.signs.n];
            if s > 0 {
                e.0 = e.0.max(tau);
            } else {
                e.1 = e.1.min(tau);
            }
        }
        b
    }

    /// Closest point of the polyhedron to `x` when it is non-empty.
    pub fn project_onto(&self, x: &[f64]) -> Vec<f64> {
        self.bounds().iter().zip(x).map(|(&(lo, hi), &v)| v.max(lo).min(hi)).collect()
    }

    /// `max_j (c_j x − b_j)⁺` over every row.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        max_violation_from_bounds(&self.bounds(), x)
    }
}

fn max_violation_from_bounds(bounds: &[(f64, f64)], x: &[f64]) -> f64 {
    bounds.iter().zip(x).map(|(&(lo, hi), &v)| (lo - v).max(v - hi).max(0.0)).fold(0.0, f64::max)
}

/// Randomized Kaczmarz on the one-bit polyhedron, coordinate form.
///
/// Each iteration draws a row uniformly from the `mn` stacked rows and moves
/// only the coordinate that row constrains.
pub fn rka_solve(r: &SignMatrix, thr: &ThresholdEnsemble, run: &RkaRun) -> Result<RkaOutcome> {
    let poly = SignPolyhedron::new(r, thr)?;
    run.validate(poly.n())?;
    let rows = poly.rows();
    let needs_bounds = run.record_trace || run.early_stop;
    let bounds = if needs_bounds { poly.bounds() } else { Vec::new() };

    let mut x = run.init.clone();
    let mut trace = Vec::new();
    let mut rng = rng::rng(run.seed, stream::KACZMARZ);
    let mut done = 0;
    if run.record_trace {
        trace.push(TracePoint { iteration: 0, max_violation: max_violation_from_bounds(&bounds, &x) });
    }
    while done < run.i_max {
        let j = rng.random_range(0..rows);
        poly.project(&mut x, j);
        done += 1;
        if run.record_trace && done % run.trace_stride == 0 {
            trace.push(TracePoint { iteration: done, max_violation: max_violation_from_bounds(&bounds, &x) });
        }
        if run.early_stop && done % rows == 0 && max_violation_from_bounds(&bounds, &x) < FEASIBILITY_TOL {
            break;
        }
    }
    Ok(RkaOutcome { estimate: x, trace, iterations: done })
}

/// Explicit `Cx ⪯ b` system with dense rows.
///
/// Reference implementation of the generic Kaczmarz update with
/// norm-proportional row sampling. Materializes `mn×n` entries, so it is
/// meant for small instances and cross-checks.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSystem {
    pub c: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl DenseSystem {
    pub fn from_signs(r: &SignMatrix, thr: &ThresholdEnsemble) -> Result<Self> {
        let poly = SignPolyhedron::new(r, thr)?;
        let n = poly.n();
        let mut c = Vec::with_capacity(poly.rows());
        let mut b = Vec::with_capacity(poly.rows());
        for (j, (k, s)) in r.stacked_rows().enumerate() {
            let mut omega = vec![0.0; n];
            omega[k] = f64::from(s);
            c.push(omega.iter().map(|w| -w).collect());
            b.push(-(f64::from(s) * thr.gamma[j]));
        }
        Ok(Self { c, b })
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(&self.b).map(|(row, b)| (dot(row, x) - b).max(0.0)).fold(0.0, f64::max)
    }

    /// `x ← x − (c_j x − b_j)⁺ c_jᵀ/‖c_j‖²` with `Pr{j} ∝ ‖c_j‖²`.
    pub fn kaczmarz(&self, run: &RkaRun) -> Result<RkaOutcome> {
        let n = self.c.first().map_or(0, Vec::len);
        run.validate(n)?;
        let rows = self.c.len();
        let norms: Vec<f64> = self.c.iter().map(|row| dot(row, row)).collect();
        let uniform = norms.iter().all(|&v| v == norms[0]);
        let weighted =
            if uniform { None } else { Some(WeightedIndex::new(&norms).map_err(|e| invalid(e.to_string()))?) };

        let mut x = run.init.clone();
        let mut trace = Vec::new();
        let mut rng = rng::rng(run.seed, stream::KACZMARZ);
        let mut done = 0;
        if run.record_trace {
            trace.push(TracePoint { iteration: 0, max_violation: self.max_violation(&x) });
        }
        while done < run.i_max {
            let j = match &weighted {
                None => rng.random_range(0..rows),
                Some(w) => w.sample(&mut rng),
            };
            let row = &self.c[j];
            let beta = (dot(row, &x) - self.b[j]).max(0.0);
            let step = beta / norms[j];
            for (xi, ci) in x.iter_mut().zip(row) {
                *xi -= step * ci;
            }
            done += 1;
            if run.record_trace && done % run.trace_stride == 0 {
                trace.push(TracePoint { iteration: done, max_violation: self.max_violation(&x) });
            }
            if run.early_stop && done % rows == 0 && self.max_violation(&x) < FEASIBILITY_TOL {
                break;
            }
        }
        Ok(RkaOutcome { estimate: x, trace, iterations: done })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `⌈log(ω₀/ε₁) / log(1/(1−1/n))⌉`.
pub fn iteration_lower_bound(omega0: f64, eps1: f64, n: usize) -> Result<usize> {
    if !(eps1 > 0.0 && omega0 > eps1) {
        return Err(invalid(format!("need omega0 > eps1 > 0, got {omega0}, {eps1}")));
    }
    if n < 2 {
        return Err(invalid(format!("need n >= 2, got {n}")));
    }
    let q = 1.0 - 1.0 / n as f64;
    let v = ceil_tol((omega0 / eps1).ln() / (1.0 / q).ln());
    Ok(v.max(1.0) as usize)
}

/// `(1/(mn))·Σ_ℓ ‖x − τ^(ℓ)‖²`.
pub fn avg_hyperplane_distance(x: &[f64], thr: &ThresholdEnsemble, r: &SignMatrix) -> Result<f64> {
    SignPolyhedron::new(r, thr)?;
    if x.len() != thr.n {
        return Err(Error::ShapeMismatch(format!("estimate has length {}, expected {}", x.len(), thr.n)));
    }
    let total: f64 = thr.gamma.iter().enumerate().map(|(j, t)| (x[j % thr.n] - t).powi(2)).sum();
    Ok(total / (thr.n * thr.m) as f64)
}
