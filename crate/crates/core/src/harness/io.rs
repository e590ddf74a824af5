//! CSV and JSON persistence of experiment results.
//!
//! The CSV starts with two comment lines, `# uno <version>` and
//! `# config <json>`, followed by a header row and one row per trial plus one
//! summary row per cell. Cell parameters repeat on every row so the file can
//! be filtered or plotted without joins.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Cell, ExperimentConfig, ExperimentResult, TrialRecord, WallClock};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    /// Format implied by a file extension; CSV unless it ends in `.json`.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::Json,
            _ => Self::Csv,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    kind: String,
    cell: usize,
    label: String,
    lambda: Option<f64>,
    sup: f64,
    m: usize,
    sigma2: f64,
    n: usize,
    dt: f64,
    omega_max: f64,
    h: Option<u32>,
    diff_order: Option<usize>,
    i_max: usize,
    eta: Option<f64>,
    admm_beta: Option<f64>,
    trial: Option<usize>,
    seed: Option<u64>,
    nmse_db: Option<f64>,
    nmse_modulo_db: Option<f64>,
    iterations: Option<usize>,
    omega0: Option<f64>,
    mean_db: Option<f64>,
    std_db: Option<f64>,
}

impl Row {
    fn for_cell(index: usize, c: &Cell, kind: &str) -> Self {
        Self {
            kind: kind.into(),
            cell: index,
            label: c.label.clone(),
            lambda: c.lambda,
            sup: c.sup,
            m: c.m,
            sigma2: c.sigma2,
            n: c.n,
            dt: c.dt,
            omega_max: c.omega_max,
            h: c.h,
            diff_order: c.diff_order,
            i_max: c.i_max,
            eta: c.eta,
            admm_beta: c.admm_beta,
            trial: None,
            seed: None,
            nmse_db: None,
            nmse_modulo_db: None,
            iterations: None,
            omega0: None,
            mean_db: None,
            std_db: None,
        }
    }

    fn into_cell(self, trials: Vec<TrialRecord>) -> Result<Cell> {
        let missing = || Error::Parse(format!("summary row of cell {} lacks mean/std", self.cell));
        Ok(Cell {
            mean_db: self.mean_db.ok_or_else(missing)?,
            std_db: self.std_db.ok_or_else(missing)?,
            label: self.label,
            lambda: self.lambda,
            sup: self.sup,
            m: self.m,
            sigma2: self.sigma2,
            n: self.n,
            dt: self.dt,
            omega_max: self.omega_max,
            h: self.h,
            diff_order: self.diff_order,
            i_max: self.i_max,
            eta: self.eta,
            admm_beta: self.admm_beta,
            trials,
        })
    }
}

pub fn write_csv<W: Write>(result: &ExperimentResult, mut w: W) -> Result<()> {
    writeln!(w, "# uno {}", result.version)?;
    writeln!(w, "# config {}", serde_json::to_string(&result.config)?)?;
    let mut wr = csv::Writer::from_writer(w);
    for (i, c) in result.cells.iter().enumerate() {
        for t in &c.trials {
            let mut row = Row::for_cell(i, c, "trial");
            row.trial = Some(t.trial);
            row.seed = Some(t.seed);
            row.nmse_db = Some(t.nmse_db);
            row.nmse_modulo_db = t.nmse_modulo_db;
            row.iterations = Some(t.iterations);
            row.omega0 = Some(t.omega0);
            wr.serialize(row)?;
        }
        let mut row = Row::for_cell(i, c, "summary");
        row.mean_db = Some(c.mean_db);
        row.std_db = Some(c.std_db);
        wr.serialize(row)?;
    }
    wr.flush()?;
    Ok(())
}

/// Inverse of [`write_csv`]. Wall-clock time is not stored in the CSV and
/// comes back as zero.
pub fn parse_csv<R: Read>(mut r: R) -> Result<ExperimentResult> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut version = None;
    let mut config = None;
    let mut body_start = 0;
    for line in text.lines() {
        let Some(rest) = line.strip_prefix('#') else { break };
        body_start += line.len() + 1;
        let rest = rest.trim_start();
        if let Some(v) = rest.strip_prefix("uno ") {
            version = Some(v.trim().to_string());
        } else if let Some(c) = rest.strip_prefix("config ") {
            config = Some(serde_json::from_str::<ExperimentConfig>(c)?);
        }
    }
    let version = version.ok_or_else(|| Error::Parse("missing `# uno <version>` line".into()))?;
    let config = config.ok_or_else(|| Error::Parse("missing `# config` line".into()))?;

    let mut rd = csv::Reader::from_reader(&text.as_bytes()[body_start.min(text.len())..]);
    let mut cells = Vec::new();
    let mut pending: Vec<TrialRecord> = Vec::new();
    for row in rd.deserialize() {
        let row: Row = row?;
        if row.cell != cells.len() {
            return Err(Error::Parse(format!("row for cell {} while reading cell {}", row.cell, cells.len())));
        }
        match row.kind.as_str() {
            "trial" => {
                pending.push(TrialRecord {
                    trial: need(row.trial, "trial")?,
                    seed: need(row.seed, "seed")?,
                    nmse_db: need(row.nmse_db, "nmse_db")?,
                    nmse_modulo_db: row.nmse_modulo_db,
                    iterations: need(row.iterations, "iterations")?,
                    omega0: need(row.omega0, "omega0")?,
                });
            }
            "summary" => cells.push(row.into_cell(std::mem::take(&mut pending))?),
            other => return Err(Error::Parse(format!("unknown row kind `{other}`"))),
        }
    }
    if !pending.is_empty() {
        return Err(Error::Parse("trailing trial rows without a summary".into()));
    }
    Ok(ExperimentResult { version, config, cells, wall_clock_s: WallClock(0.0) })
}

fn need<T>(v: Option<T>, what: &str) -> Result<T> {
    v.ok_or_else(|| Error::Parse(format!("trial row lacks {what}")))
}

pub fn write_json<W: Write>(result: &ExperimentResult, w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, result)?;
    Ok(())
}

/// Writes the result to `path` in the given format.
pub fn emit(result: &ExperimentResult, format: OutputFormat, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        OutputFormat::Csv => write_csv(result, &mut w)?,
        OutputFormat::Json => write_json(result, &mut w)?,
    }
    w.flush()?;
    Ok(())
}
