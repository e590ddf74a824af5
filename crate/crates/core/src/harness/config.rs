use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::noisy::AdmmConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    Table1,
    Table2,
    FigNmseVsM,
    Sawtooth,
    ExtremeDr,
    Table4Over,
    Table4Under,
    Claim1,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 8] = [
        Self::Table1,
        Self::Table2,
        Self::FigNmseVsM,
        Self::Sawtooth,
        Self::ExtremeDr,
        Self::Table4Over,
        Self::Table4Under,
        Self::Claim1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Table1 => "table1",
            Self::Table2 => "table2",
            Self::FigNmseVsM => "fig_nmse_vs_m",
            Self::Sawtooth => "sawtooth",
            Self::ExtremeDr => "extreme_dr",
            Self::Table4Over => "table4_over",
            Self::Table4Under => "table4_under",
            Self::Claim1 => "claim1",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|id| id.name() == s).ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

/// Grid on which bandlimited test signals are generated.
///
/// The band holds `bins` DFT bins of a `base_n`-sample window at `base_dt`;
/// the signal itself is generated `oversample` times finer, so
/// `n = base_n·oversample` and `dt = base_dt/oversample`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSettings {
    pub base_n: usize,
    pub base_dt: f64,
    pub oversample: usize,
    pub bins: usize,
    pub pieces: usize,
}

impl SignalSettings {
    pub fn n(&self) -> usize {
        self.base_n * self.oversample
    }

    pub fn dt(&self) -> f64 {
        self.base_dt / self.oversample as f64
    }

    pub fn omega_max(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.bins as f64 / (self.base_n as f64 * self.base_dt)
    }
}

/// Kaczmarz budget: `i_max` is the larger of the iteration lower bound and
/// `sweeps` passes over all `mn` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub sweeps: usize,
    pub early_stop: bool,
    /// `ζ` used when planning the rate from the measured Kaczmarz error.
    pub zeta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SawtoothSettings {
    pub f0: f64,
    pub sweeps: usize,
    pub dt: f64,
    pub amplitude: f64,
}

/// Linear-model experiment settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSettings {
    pub rows: usize,
    pub cols: usize,
    pub dt: f64,
    pub bins: usize,
    pub prefilter: bool,
    pub pilot_ridge: f64,
    pub admm: AdmmConfig,
    /// Choose `η, β` per noise level by grid search on pilot trials.
    pub tune: bool,
    pub eta_grid: Vec<f64>,
    pub beta_grid: Vec<f64>,
    pub pilot_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub trials: usize,
    pub seed: u64,
    pub lambdas: Vec<f64>,
    /// Signal sup-norms `‖x‖_∞`.
    pub sups: Vec<f64>,
    pub ms: Vec<usize>,
    /// Noise variances `σ²_ε` (linear-model experiments).
    pub noise_vars: Vec<f64>,
    /// Threshold std of the unfolded one-bit runs (`sawtooth`, `claim1`).
    pub baseline_sigma: f64,
    pub signal: SignalSettings,
    pub solver: SolverSettings,
    pub sawtooth: SawtoothSettings,
    pub linear: LinearSettings,
    pub output: Option<String>,
}

impl ExperimentConfig {
    /// Defaults for the given experiment.
    pub fn defaults(id: ExperimentId) -> Self {
        let signal = SignalSettings { base_n: 728, base_dt: 1e-3, oversample: 16, bins: 16, pieces: 16 };
        let linear = LinearSettings {
            rows: 728,
            cols: 100,
            dt: 1e-3,
            bins: 8,
            prefilter: true,
            pilot_ridge: 10.0,
            admm: AdmmConfig::default(),
            tune: true,
            eta_grid: vec![0.0, 1e-4, 1e-3, 1e-2, 1e-1],
            beta_grid: vec![0.1, 1.0, 10.0],
            pilot_trials: 2,
        };
        let mut cfg = Self {
            experiment: id,
            trials: 15,
            seed: 1,
            lambdas: vec![0.2, 0.5, 1.0],
            sups: vec![8.0],
            ms: vec![400],
            noise_vars: vec![0.0],
            baseline_sigma: 1.0,
            signal,
            solver: SolverSettings { sweeps: 40, early_stop: true, zeta: 1.5 },
            sawtooth: SawtoothSettings { f0: 50.0, sweeps: 10, dt: 1e-3, amplitude: 1.0 },
            linear,
            output: None,
        };
        match id {
            ExperimentId::Table1 => {}
            ExperimentId::Table2 => {
                cfg.lambdas = vec![0.5];
                cfg.sups = vec![10.0, 15.0, 20.0];
            }
            ExperimentId::FigNmseVsM => {
                cfg.lambdas = vec![0.5];
                cfg.sups = vec![20.0];
                cfg.ms = vec![50, 100, 200, 400, 800, 1600];
            }
            ExperimentId::Sawtooth => {
                cfg.lambdas = vec![];
                cfg.sups = vec![1.0];
            }
            ExperimentId::ExtremeDr => {
                cfg.lambdas = vec![1.0];
                cfg.sups = vec![1000.0];
                cfg.signal.oversample = 40;
            }
            ExperimentId::Table4Over | ExperimentId::Table4Under => {
                cfg.lambdas = vec![1.5];
                cfg.sups = vec![5.0];
                cfg.ms = vec![1000];
                cfg.noise_vars = vec![0.1, 0.05, 0.01];
                if id == ExperimentId::Table4Under {
                    cfg.linear.cols = 1000;
                }
            }
            ExperimentId::Claim1 => {
                cfg.lambdas = vec![1.0];
                cfg.ms = vec![400, 1600];
                cfg.signal.oversample = 4;
            }
        }
        cfg
    }

    /// Parses a JSON document; absent fields take the experiment's defaults.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        let id: ExperimentId = match value.get("experiment") {
            Some(v) => serde_json::from_value(v.clone())?,
            None => return Err(Error::ConfigInvalid("missing `experiment`".into())),
        };
        let mut base = serde_json::to_value(Self::defaults(id))?;
        merge(&mut base, value);
        let cfg: Self = serde_json::from_value(base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.to_string()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.ms.is_empty() || self.ms.contains(&0) {
            return bad("m grid must be non-empty with m >= 1");
        }
        if self.sups.is_empty() || self.sups.iter().any(|&s| !(s > 0.0)) {
            return bad("sup-norm grid must be non-empty and positive");
        }
        let needs_lambda = !matches!(self.experiment, ExperimentId::Sawtooth);
        if needs_lambda && (self.lambdas.is_empty() || self.lambdas.iter().any(|&l| !(l > 0.0))) {
            return bad("lambda grid must be non-empty and positive");
        }
        if self.noise_vars.is_empty() || self.noise_vars.iter().any(|&v| !(v >= 0.0)) {
            return bad("noise-variance grid must be non-empty and non-negative");
        }
        let s = &self.signal;
        if s.base_n < 2 || s.oversample == 0 || s.bins == 0 || s.pieces == 0 || !(s.base_dt > 0.0) {
            return bad("signal grid settings must be positive");
        }
        if self.solver.sweeps == 0 || !(self.solver.zeta > 1.0) {
            return bad("solver needs sweeps >= 1 and zeta > 1");
        }
        if !(self.baseline_sigma > 0.0) {
            return bad("baseline_sigma must be positive");
        }
        let l = &self.linear;
        if matches!(self.experiment, ExperimentId::Table4Over | ExperimentId::Table4Under) {
            if l.rows == 0 || l.cols == 0 || l.bins == 0 {
                return bad("linear-model sizes must be positive");
            }
            if l.tune && (l.eta_grid.is_empty() || l.beta_grid.is_empty() || l.pilot_trials == 0) {
                return bad("tuning needs non-empty grids and pilot trials");
            }
            l.admm.validate()?;
        }
        Ok(())
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
