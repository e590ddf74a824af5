//! Monte-Carlo experiment runner and result persistence.

mod check;
mod config;
mod io;

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use check::{run_checks, CheckOutcome};
pub use config::{ExperimentConfig, ExperimentId, LinearSettings, SawtoothSettings, SignalSettings, SolverSettings};
pub use io::{emit, parse_csv, write_csv, write_json, OutputFormat};

use crate::error::Result;
use crate::modulo::{align_offset, beta_for_sup, fold};
use crate::noisy::{pnp_admm, unfold_noisy, AdmmConfig, LinearModel, NoisySeeds, NoisyUnoConfig};
use crate::onebit::{iteration_lower_bound, quantize_values, rka_solve, RkaRun, ThresholdEnsemble};
use crate::rng::{self, stream};
use crate::signals::{gen_bandlimited_random_with, gen_sawtooth, nmse_db, SampledSignal};
use crate::uno::{plan_rate, uno_reconstruct, uno_sample, ReconstructConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Seed offset of the pilot trials used for hyper-parameter selection, so
/// they never coincide with an evaluation trial.
const PILOT_SEED_OFFSET: u64 = 1 << 32;

/// Wall-clock seconds. Timing is metadata: it never takes part in equality,
/// so two runs of the same configuration compare equal.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WallClock(pub f64);

impl PartialEq for WallClock {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

/// One trial of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub nmse_db: f64,
    /// NMSE of the recovered folded samples (folded pipelines only).
    pub nmse_modulo_db: Option<f64>,
    /// Kaczmarz updates performed.
    pub iterations: usize,
    /// `‖x̄̃‖²` of the converged estimate, i.e. the squared distance from the
    /// zero initialization.
    pub omega0: f64,
}

/// One parameter combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// `uno`, `onebit` (unfolded one-bit baseline) or `noisy_uno`.
    pub label: String,
    pub lambda: Option<f64>,
    pub sup: f64,
    pub m: usize,
    pub sigma2: f64,
    pub n: usize,
    pub dt: f64,
    pub omega_max: f64,
    /// Planned oversampling exponent; absent when λ is too small for the
    /// measured Kaczmarz error.
    pub h: Option<u32>,
    pub diff_order: Option<usize>,
    pub i_max: usize,
    /// ADMM settings actually used (linear-model cells).
    pub eta: Option<f64>,
    pub admm_beta: Option<f64>,
    pub trials: Vec<TrialRecord>,
    pub mean_db: f64,
    pub std_db: f64,
}

impl Cell {
    pub fn raw_db(&self) -> Vec<f64> {
        self.trials.iter().map(|t| t.nmse_db).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub version: String,
    pub config: ExperimentConfig,
    pub cells: Vec<Cell>,
    pub wall_clock_s: WallClock,
}

impl ExperimentResult {
    pub fn cell(&self, label: &str, pred: impl Fn(&Cell) -> bool) -> Option<&Cell> {
        self.cells.iter().find(|c| c.label == label && pred(c))
    }
}

pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Kaczmarz budget for an `n`-sample, `m`-sequence problem.
pub fn kaczmarz_budget(n: usize, m: usize, lambda_scale: f64, sweeps: usize) -> usize {
    // ω₀ guess: the whole box [-λ, λ]^n; ε₁ = 1e-6·n.
    let omega0 = n as f64 * lambda_scale * lambda_scale;
    let eps1 = 1e-6 * n as f64;
    let bound = if n >= 2 && omega0 > eps1 { iteration_lower_bound(omega0, eps1, n).unwrap_or(1) } else { 1 };
    bound.max(sweeps * m * n)
}

/// Runs the configured experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let start = Instant::now();
    let cells = match cfg.experiment {
        ExperimentId::Table1 | ExperimentId::Table2 | ExperimentId::FigNmseVsM | ExperimentId::ExtremeDr => {
            uno_grid(cfg)?
        }
        ExperimentId::Claim1 => {
            let mut cells = Vec::new();
            for &sup in &cfg.sups {
                for &m in &cfg.ms {
                    cells.push(onebit_bandlimited_cell(cfg, sup, m)?);
                    for &lambda in &cfg.lambdas {
                        cells.push(uno_cell(cfg, lambda, sup, m)?);
                    }
                }
            }
            cells
        }
        ExperimentId::Sawtooth => cfg.ms.iter().map(|&m| sawtooth_cell(cfg, m)).collect::<Result<_>>()?,
        ExperimentId::Table4Over | ExperimentId::Table4Under => linear_grid(cfg)?,
    };
    Ok(ExperimentResult {
        version: VERSION.to_string(),
        config: cfg.clone(),
        cells,
        wall_clock_s: WallClock(start.elapsed().as_secs_f64()),
    })
}

fn uno_grid(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    let mut cells = Vec::new();
    for &lambda in &cfg.lambdas {
        for &sup in &cfg.sups {
            for &m in &cfg.ms {
                cells.push(uno_cell(cfg, lambda, sup, m)?);
            }
        }
    }
    Ok(cells)
}

fn trial_seeds(cfg: &ExperimentConfig) -> Vec<(usize, u64)> {
    (0..cfg.trials).map(|t| (t, cfg.seed.wrapping_add(t as u64))).collect()
}

fn bandlimited(cfg: &ExperimentConfig, sup: f64, seed: u64) -> Result<SampledSignal> {
    let s = &cfg.signal;
    gen_bandlimited_random_with(s.n(), s.omega_max(), s.dt(), sup, seed, s.pieces)
}

fn finish_cell(mut cell: Cell) -> Cell {
    let (mean, std) = mean_std(&cell.raw_db());
    cell.mean_db = mean;
    cell.std_db = std;
    cell
}

fn uno_cell(cfg: &ExperimentConfig, lambda: f64, sup: f64, m: usize) -> Result<Cell> {
    let s = &cfg.signal;
    let (n, dt, omega) = (s.n(), s.dt(), s.omega_max());
    let beta = beta_for_sup(sup, lambda);
    let i_max = kaczmarz_budget(n, m, lambda, cfg.solver.sweeps);
    let runs: Vec<(TrialRecord, usize)> = trial_seeds(cfg)
        .into_par_iter()
        .map(|(trial, seed)| -> Result<(TrialRecord, usize)> {
            let x = bandlimited(cfg, sup, seed)?;
            let meas = uno_sample(&x, lambda, m, seed)?;
            let mut rc = ReconstructConfig::new(beta, i_max, seed);
            rc.early_stop = cfg.solver.early_stop;
            let rec = uno_reconstruct(&meas, &rc)?;
            let folded = fold(x.samples(), lambda)?;
            let aligned = align_offset(x.samples(), &rec.signal, lambda)?;
            let record = TrialRecord {
                trial,
                seed,
                nmse_db: nmse_db(x.samples(), &aligned)?,
                nmse_modulo_db: Some(nmse_db(folded.values(), &rec.modulo_estimate)?),
                iterations: rec.iterations,
                omega0: rec.modulo_estimate.iter().map(|v| v * v).sum(),
            };
            Ok((record, rec.diff_order))
        })
        .collect::<Result<_>>()?;
    let diff_order = runs.first().map(|r| r.1);
    let trials: Vec<TrialRecord> = runs.into_iter().map(|r| r.0).collect();

    // e_inf from the measured folded-domain error, then the rate plan.
    let modulo: Vec<f64> = trials.iter().filter_map(|t| t.nmse_modulo_db).collect();
    let e_inf = lambda * 10f64.powf(mean_std(&modulo).0 / 20.0);
    let h = plan_rate(beta, lambda, e_inf, omega, cfg.solver.zeta).ok().map(|p| p.h);

    Ok(finish_cell(Cell {
        label: "uno".into(),
        lambda: Some(lambda),
        sup,
        m,
        sigma2: 0.0,
        n,
        dt,
        omega_max: omega,
        h,
        diff_order,
        i_max,
        eta: None,
        admm_beta: None,
        trials,
        mean_db: 0.0,
        std_db: 0.0,
    }))
}

/// One-bit sampling of the raw signal (no folding) against `N(0, σ²)`
/// thresholds, recovered by Kaczmarz.
fn onebit_trial(
    x: &[f64],
    sigma: f64,
    m: usize,
    i_max: usize,
    early_stop: bool,
    trial: usize,
    seed: u64,
) -> Result<TrialRecord> {
    let thr = ThresholdEnsemble::gaussian(x.len(), m, sigma, seed)?;
    let r = quantize_values(x, &thr)?;
    let mut run = RkaRun::new(i_max, seed, x.len());
    run.early_stop = early_stop;
    let out = rka_solve(&r, &thr, &run)?;
    Ok(TrialRecord {
        trial,
        seed,
        nmse_db: nmse_db(x, &out.estimate)?,
        nmse_modulo_db: None,
        iterations: out.iterations,
        omega0: out.estimate.iter().map(|v| v * v).sum(),
    })
}

fn onebit_cell_from(
    cfg: &ExperimentConfig,
    x_of: impl Fn(u64) -> Result<SampledSignal> + Sync,
    sup: f64,
    m: usize,
) -> Result<Cell> {
    let probe = x_of(cfg.seed)?;
    let (n, dt, omega) = (probe.len(), probe.dt(), probe.omega_max());
    let sigma = cfg.baseline_sigma;
    let i_max = kaczmarz_budget(n, m, sigma, cfg.solver.sweeps);
    let trials = trial_seeds(cfg)
        .into_par_iter()
        .map(|(trial, seed)| {
            let x = x_of(seed)?;
            onebit_trial(x.samples(), sigma, m, i_max, cfg.solver.early_stop, trial, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(finish_cell(Cell {
        label: "onebit".into(),
        lambda: None,
        sup,
        m,
        sigma2: 0.0,
        n,
        dt,
        omega_max: omega,
        h: None,
        diff_order: None,
        i_max,
        eta: None,
        admm_beta: None,
        trials,
        mean_db: 0.0,
        std_db: 0.0,
    }))
}

fn onebit_bandlimited_cell(cfg: &ExperimentConfig, sup: f64, m: usize) -> Result<Cell> {
    onebit_cell_from(cfg, |seed| bandlimited(cfg, sup, seed), sup, m)
}

fn sawtooth_cell(cfg: &ExperimentConfig, m: usize) -> Result<Cell> {
    let st = &cfg.sawtooth;
    let x = gen_sawtooth(st.f0, st.sweeps, st.dt, st.amplitude)?;
    onebit_cell_from(cfg, |_| Ok(x.clone()), st.amplitude, m)
}

/// Everything about a linear-model trial that does not depend on the ADMM
/// settings.
struct LinearTrial {
    trial: usize,
    seed: u64,
    theta: DVector<f64>,
    a: DMatrix<f64>,
    y_bar: DVector<f64>,
    iterations: usize,
    diff_order: usize,
}

fn gaussian_design(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng::rng(seed, stream::DESIGN);
    // Column-major fill keeps the draw order independent of nalgebra internals.
    let data: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
    DMatrix::from_vec(rows, cols, data)
}

fn linear_trial(
    cfg: &ExperimentConfig,
    lambda: f64,
    sup: f64,
    m: usize,
    sigma2: f64,
    trial: usize,
    seed: u64,
) -> Result<LinearTrial> {
    let l = &cfg.linear;
    let omega = 2.0 * std::f64::consts::PI * l.bins as f64 / (l.rows as f64 * l.dt);
    let target = gen_bandlimited_random_with(l.rows, omega, l.dt, sup, seed, cfg.signal.pieces)?;
    let a = gaussian_design(l.rows, l.cols, seed);
    let model = LinearModel::explaining(a, target.samples(), sigma2.sqrt())?;
    let beta_x = beta_for_sup(sup, lambda);
    let ncfg = NoisyUnoConfig {
        lambda,
        m,
        beta_x,
        dt: l.dt,
        omega_max: omega,
        i_max: kaczmarz_budget(l.rows, m, lambda, cfg.solver.sweeps),
        early_stop: cfg.solver.early_stop,
        prefilter: l.prefilter,
        pilot_ridge: l.pilot_ridge,
        noise_bound: None,
        admm: l.admm.clone(),
    };
    // ADMM runs separately so that tuning can reuse the unfolded data.
    let out = unfold_noisy(&model, &ncfg, NoisySeeds::from_base(seed))?;
    Ok(LinearTrial {
        trial,
        seed,
        theta: model.theta().clone(),
        a: model.a().clone(),
        y_bar: out.y_bar,
        iterations: out.iterations,
        diff_order: out.diff_order,
    })
}

fn admm_nmse(t: &LinearTrial, admm: &AdmmConfig) -> Result<f64> {
    let est = pnp_admm(&t.y_bar, &t.a, admm, &DVector::zeros(t.a.ncols()))?;
    nmse_db(t.theta.as_slice(), est.as_slice())
}

/// Best `(η, β)` on pilot trials by mean NMSE.
fn tune_admm(cfg: &ExperimentConfig, pilots: &[LinearTrial]) -> Result<AdmmConfig> {
    let l = &cfg.linear;
    let mut best: Option<(f64, AdmmConfig)> = None;
    for &eta in &l.eta_grid {
        for &beta in &l.beta_grid {
            let cand = AdmmConfig { eta, beta, ..l.admm.clone() };
            let scores = pilots.iter().map(|t| admm_nmse(t, &cand)).collect::<Result<Vec<_>>>()?;
            let score = mean_std(&scores).0;
            if best.as_ref().is_none_or(|(s, _)| score < *s) {
                best = Some((score, cand));
            }
        }
    }
    Ok(best.map(|b| b.1).unwrap_or_else(|| l.admm.clone()))
}

fn linear_grid(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    let l = &cfg.linear;
    let mut cells = Vec::new();
    for &lambda in &cfg.lambdas {
        for &sup in &cfg.sups {
            for &m in &cfg.ms {
                for &sigma2 in &cfg.noise_vars {
                    let admm = if l.tune {
                        let pilots = (0..l.pilot_trials)
                            .into_par_iter()
                            .map(|p| {
                                let seed = cfg.seed.wrapping_add(PILOT_SEED_OFFSET + p as u64);
                                linear_trial(cfg, lambda, sup, m, sigma2, p, seed)
                            })
                            .collect::<Result<Vec<_>>>()?;
                        tune_admm(cfg, &pilots)?
                    } else {
                        l.admm.clone()
                    };
                    let runs = trial_seeds(cfg)
                        .into_par_iter()
                        .map(|(trial, seed)| {
                            let t = linear_trial(cfg, lambda, sup, m, sigma2, trial, seed)?;
                            let nmse = admm_nmse(&t, &admm)?;
                            Ok((t, nmse))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let diff_order = runs.first().map(|r| r.0.diff_order);
                    let trials = runs
                        .iter()
                        .map(|(t, nmse)| TrialRecord {
                            trial: t.trial,
                            seed: t.seed,
                            nmse_db: *nmse,
                            nmse_modulo_db: None,
                            iterations: t.iterations,
                            omega0: 0.0,
                        })
                        .collect();
                    let omega = 2.0 * std::f64::consts::PI * l.bins as f64 / (l.rows as f64 * l.dt);
                    cells.push(finish_cell(Cell {
                        label: "noisy_uno".into(),
                        lambda: Some(lambda),
                        sup,
                        m,
                        sigma2,
                        n: l.rows,
                        dt: l.dt,
                        omega_max: omega,
                        h: None,
                        diff_order,
                        i_max: kaczmarz_budget(l.rows, m, lambda, cfg.solver.sweeps),
                        eta: Some(admm.eta),
                        admm_beta: Some(admm.beta),
                        trials,
                        mean_db: 0.0,
                        std_db: 0.0,
                    }));
                }
            }
        }
    }
    Ok(cells)
}

/// Summary lines keyed by cell, e.g. for console output.
pub fn summarize(result: &ExperimentResult) -> BTreeMap<usize, String> {
    result
        .cells
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let lambda = c.lambda.map_or("-".to_string(), |l| l.to_string());
            let line = format!(
                "{:<9} λ={:<4} sup={:<6} m={:<5} σ²={:<5} n={:<6} N={} h={} mean={:.3} dB std={:.3} dB",
                c.label,
                lambda,
                c.sup,
                c.m,
                c.sigma2,
                c.n,
                c.diff_order.map_or("-".into(), |v| v.to_string()),
                c.h.map_or("-".into(), |v| v.to_string()),
                c.mean_db,
                c.std_db
            );
            (i, line)
        })
        .collect()
}
