//! Experiment configs, result files and reproducibility on small grids.

use std::io::Cursor;

use uno_core::harness::{
    emit, parse_csv, run_experiment, write_csv, write_json, ExperimentConfig, ExperimentId, ExperimentResult,
    OutputFormat,
};
use uno_core::modulo::{fold, ModuloSamples};
use uno_core::onebit::{quantize_values, SignMatrix, ThresholdEnsemble};
use uno_core::signals::{gen_bandlimited_random, SampledSignal};

const SMALL: &str = r#"{
  "experiment": "table1",
  "trials": 2,
  "seed": 9,
  "lambdas": [1.0],
  "sups": [2.0],
  "ms": [20],
  "signal": {"oversample": 1},
  "solver": {"sweeps": 5}
}"#;

fn small() -> ExperimentResult {
    run_experiment(&ExperimentConfig::from_json(SMALL).unwrap()).unwrap()
}

fn csv_bytes(r: &ExperimentResult) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(r, &mut buf).unwrap();
    buf
}

#[test]
fn json_config_overrides_only_what_it_names() {
    let cfg = ExperimentConfig::from_json(SMALL).unwrap();
    let def = ExperimentConfig::defaults(ExperimentId::Table1);
    assert_eq!(cfg.trials, 2);
    assert_eq!(cfg.signal.oversample, 1);
    assert_eq!(cfg.signal.base_n, def.signal.base_n);
    assert_eq!(cfg.solver.zeta, def.solver.zeta);
    assert_eq!(cfg.ms, [20]);
    assert_eq!(cfg.sawtooth, def.sawtooth);
}

#[test]
fn bad_configs_are_rejected() {
    assert!(ExperimentConfig::from_json(r#"{"trials": 3}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"experiment": "table9"}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"experiment": "table1", "trials": 0}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"experiment": "table1", "lambdas": [-1.0]}"#).is_err());
}

#[test]
fn result_echoes_config_and_fills_cells() {
    let r = small();
    assert_eq!(r.config, ExperimentConfig::from_json(SMALL).unwrap());
    assert_eq!(r.cells.len(), 1);
    let c = &r.cells[0];
    assert_eq!(c.label, "uno");
    assert_eq!(c.trials.len(), 2);
    assert_eq!(c.n, 728);
    // dt·Ω·e ≈ 0.375 on this coarse grid: ⌈ln(1/2)/ln(0.375)⌉ = 1.
    assert_eq!(c.diff_order, Some(1));
    assert!(c.mean_db.is_finite() && c.mean_db < 0.0);
    assert_eq!(c.trials[1].seed, 10);
}

#[test]
fn csv_round_trips_and_repeats_byte_for_byte() {
    let a = small();
    let b = small();
    let bytes = csv_bytes(&a);
    assert_eq!(bytes, csv_bytes(&b));
    let back = parse_csv(Cursor::new(&bytes)).unwrap();
    assert_eq!(back, a);
}

#[test]
fn csv_schema_has_the_documented_columns() {
    let text = String::from_utf8(csv_bytes(&small())).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# uno "));
    assert!(lines.next().unwrap().starts_with("# config {"));
    let header = lines.next().unwrap();
    assert_eq!(
        header,
        "kind,cell,label,lambda,sup,m,sigma2,n,dt,omega_max,h,diff_order,i_max,eta,admm_beta,\
         trial,seed,nmse_db,nmse_modulo_db,iterations,omega0,mean_db,std_db"
    );
    let kinds: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(kinds, ["trial", "trial", "summary"]);
}

#[test]
fn json_round_trips() {
    let a = small();
    let mut buf = Vec::new();
    write_json(&a, &mut buf).unwrap();
    let back: ExperimentResult = serde_json::from_slice(&buf).unwrap();
    assert_eq!(back, a);
}

#[test]
fn emit_picks_format_from_extension() {
    let dir = tempfile::tempdir().unwrap();
    let r = small();
    for (name, format) in [("out.csv", OutputFormat::Csv), ("out.json", OutputFormat::Json)] {
        let path = dir.path().join(name);
        assert_eq!(OutputFormat::from_path(&path), format);
        emit(&r, format, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.starts_with('#'), format == OutputFormat::Csv);
    }
}

#[test]
fn signal_modulo_and_sign_files_round_trip() {
    let x = gen_bandlimited_random(256, 40.0, 1e-3, 3.0, 4).unwrap();
    let mut buf = Vec::new();
    x.write_csv(&mut buf).unwrap();
    let back = SampledSignal::read_csv(&x.header(), Cursor::new(&buf)).unwrap();
    assert_eq!(back, x);

    let folded = fold(x.samples(), 0.5).unwrap();
    let mut buf = Vec::new();
    folded.write_csv(&mut buf, x.dt()).unwrap();
    let back = ModuloSamples::read_csv(&folded.header(x.dt(), Some(4)), Cursor::new(&buf)).unwrap();
    assert_eq!(back, folded);

    let thr = ThresholdEnsemble::gaussian(256, 7, 0.2, 4).unwrap();
    let r = quantize_values(folded.values(), &thr).unwrap();
    let mut buf = Vec::new();
    r.write_packed(&mut buf, 4, 0.5).unwrap();
    let (head, back) = SignMatrix::read_packed(Cursor::new(&buf)).unwrap();
    assert_eq!((head.n, head.m, head.seed, head.lambda), (256, 7, 4, 0.5));
    assert_eq!(back, r);
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    assert_eq!(SignMatrix::read_csv(Cursor::new(&buf)).unwrap(), r);
}
