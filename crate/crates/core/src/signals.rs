//! Test signals and reconstruction scoring.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{self, stream};

/// Value reported by [`nmse_db`] when the estimate is exact.
pub const NMSE_FLOOR_DB: f64 = -300.0;

/// Default number of constant pieces in the random magnitude spectrum.
pub const DEFAULT_PIECES: usize = 16;

/// Uniformly sampled real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    samples: Vec<f64>,
    dt: f64,
    omega_max: f64,
    seed: Option<u64>,
}

/// JSON header accompanying a signal CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalHeader {
    pub n: usize,
    pub dt: f64,
    pub omega_max: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct SeriesRow {
    pub index: usize,
    pub time: f64,
    pub value: f64,
}

impl SampledSignal {
    pub fn new(samples: Vec<f64>, dt: f64, omega_max: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("signal must have at least one sample"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(invalid("signal samples must be finite"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("dt must be positive, got {dt}")));
        }
        if !(omega_max > 0.0 && omega_max.is_finite()) {
            return Err(invalid(format!("omega_max must be positive, got {omega_max}")));
        }
        Ok(Self { samples, dt, omega_max, seed: None })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Sup-norm of the samples.
    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.samples)
    }

    pub fn header(&self) -> SignalHeader {
        SignalHeader { n: self.len(), dt: self.dt, omega_max: self.omega_max, seed: self.seed }
    }

    /// Writes `index,time,value` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_series(w, &self.samples, self.dt)
    }

    /// Rebuilds a signal from its JSON header and CSV body.
    pub fn read_csv<R: Read>(header: &SignalHeader, r: R) -> Result<Self> {
        let samples = read_series(r)?;
        if samples.len() != header.n {
            return Err(Error::Parse(format!("header declares {} samples, body has {}", header.n, samples.len())));
        }
        let mut s = Self::new(samples, header.dt, header.omega_max)?;
        s.seed = header.seed;
        Ok(s)
    }
}

pub(crate) fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub(crate) fn write_series<W: Write>(w: W, values: &[f64], dt: f64) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for (index, &value) in values.iter().enumerate() {
        wr.serialize(SeriesRow { index, time: index as f64 * dt, value })?;
    }
    wr.flush()?;
    Ok(())
}

pub(crate) fn read_series<R: Read>(r: R) -> Result<Vec<f64>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rd.deserialize() {
        let row: SeriesRow = row?;
        if row.index != out.len() {
            return Err(Error::Parse(format!("expected index {}, found {}", out.len(), row.index)));
        }
        out.push(row.value);
    }
    Ok(out)
}

/// Random real signal bandlimited to `omega_max`, scaled to `‖x‖_∞ = target_sup`.
///
/// Uses [`DEFAULT_PIECES`] spectral pieces; see [`gen_bandlimited_random_with`].
pub fn gen_bandlimited_random(n: usize, omega_max: f64, dt: f64, target_sup: f64, seed: u64) -> Result<SampledSignal> {
    gen_bandlimited_random_with(n, omega_max, dt, target_sup, seed, DEFAULT_PIECES)
}

/// Index of the highest DFT bin whose frequency does not exceed `omega_max`.
pub fn band_edge_bin(n: usize, omega_max: f64, dt: f64) -> usize {
    let k = (omega_max * n as f64 * dt / (2.0 * PI) + 1e-9).floor() as usize;
    k.min(n / 2)
}

/// As [`gen_bandlimited_random`] with an explicit number of spectral pieces.
///
/// The positive-frequency bins `1..=K` (no DC term) are split into `pieces`
/// contiguous groups, each with a uniform(0,1) magnitude; every bin gets an
/// independent uniform phase and the negative half is the conjugate mirror.
pub fn gen_bandlimited_random_with(
    n: usize,
    omega_max: f64,
    dt: f64,
    target_sup: f64,
    seed: u64,
    pieces: usize,
) -> Result<SampledSignal> {
    if n < 2 {
        return Err(invalid(format!("need n >= 2, got {n}")));
    }
    if !(target_sup > 0.0 && target_sup.is_finite()) {
        return Err(invalid(format!("target_sup must be positive, got {target_sup}")));
    }
    if !(dt > 0.0 && omega_max > 0.0) {
        return Err(invalid("dt and omega_max must be positive"));
    }
    if dt * omega_max > PI * (1.0 + 1e-12) {
        return Err(invalid(format!("dt·omega_max = {} exceeds π", dt * omega_max)));
    }
    if pieces == 0 {
        return Err(invalid("pieces must be at least 1"));
    }
    let k_max = band_edge_bin(n, omega_max, dt);
    if k_max == 0 {
        return Err(invalid("band contains no nonzero DFT bin on this grid"));
    }
    let pieces = pieces.min(k_max);

    let mut rng = rng::rng(seed, stream::SIGNAL);
    let mags: Vec<f64> = (0..pieces).map(|_| rng.random::<f64>()).collect();
    let mut spec = vec![Complex64::new(0.0, 0.0); n];
    for k in 1..=k_max {
        let mag = mags[(k - 1) * pieces / k_max];
        let phase = 2.0 * PI * rng.random::<f64>();
        if 2 * k == n {
            // Nyquist bin must be real.
            spec[k] = Complex64::new(mag * phase.cos().signum(), 0.0);
        } else {
            spec[k] = Complex64::from_polar(mag, phase);
            spec[n - k] = spec[k].conj();
        }
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
    let mut x: Vec<f64> = spec.iter().map(|c| c.re).collect();

    let (imax, peak) =
        x.iter().enumerate().fold((0, 0.0_f64), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
    if peak == 0.0 {
        return Err(invalid("generated spectrum is identically zero"));
    }
    let scale = target_sup / peak;
    for v in x.iter_mut() {
        *v = (*v * scale).clamp(-target_sup, target_sup);
    }
    // Pin the peak so the sup-norm is exact rather than exact-up-to-rounding.
    x[imax] = target_sup.copysign(x[imax]);
    Ok(SampledSignal::new(x, dt, omega_max)?.with_seed(seed))
}

/// Sawtooth with fundamental `f0`, rising linearly from `-amplitude`.
pub fn gen_sawtooth(f0: f64, sweeps: usize, dt: f64, amplitude: f64) -> Result<SampledSignal> {
    if !(f0 > 0.0) || sweeps == 0 || !(dt > 0.0) {
        return Err(invalid("f0, sweeps and dt must be positive"));
    }
    if dt >= 1.0 / (2.0 * f0) {
        return Err(invalid(format!("dt = {dt} violates dt < 1/(2·f0)")));
    }
    if !(amplitude >= 0.0) {
        return Err(invalid("amplitude must be non-negative"));
    }
    let n = (sweeps as f64 / (f0 * dt)).round() as usize;
    let period = 1.0 / (f0 * dt);
    let whole = period.round();
    let samples = (0..n)
        .map(|k| {
            let phase = if (period - whole).abs() < 1e-9 {
                // integer samples per period: keep the sequence exactly periodic
                (k as f64 % whole) / whole
            } else {
                let t = k as f64 * f0 * dt;
                let p = t - t.floor();
                if 1.0 - p < 1e-9 {
                    0.0
                } else {
                    p
                }
            };
            amplitude * (2.0 * phase - 1.0)
        })
        .collect();
    // The band of a sawtooth is unbounded; report the grid's Nyquist frequency.
    SampledSignal::new(samples, dt, PI / dt)
}

/// Band-limited interpolation onto a grid `factor` times finer.
pub fn sinc_resample(x: &SampledSignal, factor: usize) -> Result<SampledSignal> {
    if factor == 0 {
        return Err(invalid("resampling factor must be at least 1"));
    }
    if factor == 1 {
        return Ok(x.clone());
    }
    let n = x.len();
    let len = n * factor;
    let mut planner = FftPlanner::new();
    let mut spec: Vec<Complex64> = x.samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut spec);

    let mut up = vec![Complex64::new(0.0, 0.0); len];
    let half = (n - 1) / 2;
    up[0] = spec[0];
    for k in 1..=half {
        up[k] = spec[k];
        up[len - k] = spec[n - k];
    }
    if n.is_multiple_of(2) {
        let nyq = spec[n / 2] * 0.5;
        up[n / 2] = nyq;
        up[len - n / 2] = nyq;
    }
    planner.plan_fft_inverse(len).process(&mut up);
    let samples = up.iter().map(|c| c.re / n as f64).collect();
    let mut out = SampledSignal::new(samples, x.dt / factor as f64, x.omega_max)?;
    out.seed = x.seed;
    Ok(out)
}

/// Ideal low-pass filter: zeroes every DFT bin above `omega_cut` rad/s.
pub fn brickwall_lowpass(x: &[f64], dt: f64, omega_cut: f64) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let keep = band_edge_bin(n, omega_cut, dt);
    let mut planner = FftPlanner::new();
    let mut spec: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut spec);
    for (k, c) in spec.iter_mut().enumerate() {
        if k.min(n - k) > keep {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut spec);
    spec.iter().map(|c| c.re / n as f64).collect()
}

/// Normalized squared error `‖x − x̄‖² / ‖x‖²` in dB.
///
/// Exact estimates, and anything below [`NMSE_FLOOR_DB`], report the floor.
pub fn nmse_db(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::ShapeMismatch(format!("truth has {} samples, estimate {}", truth.len(), estimate.len())));
    }
    let power: f64 = truth.iter().map(|v| v * v).sum();
    if power == 0.0 {
        return Err(invalid("truth has zero norm"));
    }
    let err: f64 = truth.iter().zip(estimate).map(|(a, b)| (a - b) * (a - b)).sum();
    if err == 0.0 {
        return Ok(NMSE_FLOOR_DB);
    }
    Ok((10.0 * (err / power).log10()).max(NMSE_FLOOR_DB))
}
