//! `uno` command line: run experiments, check invariants, plan sampling rates.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use uno_core::harness::{self, emit, run_checks, ExperimentConfig, ExperimentId, OutputFormat};
use uno_core::noisy::plan_noisy_rate;
use uno_core::uno::plan_rate;

#[derive(Parser)]
#[command(name = "uno", version, about = "Unlimited one-bit sampling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and print a per-cell summary.
    Run {
        /// table1, table2, fig_nmse_vs_m, sawtooth, extreme_dr, table4_over,
        /// table4_under or claim1
        experiment: String,
        /// JSON config; fields it omits keep the experiment defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        /// Output file; `.json` selects JSON, anything else CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suite; exits non-zero if any check fails.
    Check {
        /// Also run the Monte-Carlo experiments against their thresholds.
        #[arg(long)]
        full: bool,
    },
    /// Oversampling exponent and sampling interval for a given error bound.
    PlanRate {
        #[arg(long)]
        beta_x: f64,
        #[arg(long)]
        lambda: f64,
        /// Sup-norm error of the recovered folded samples (plus filtered
        /// folded noise with --noisy).
        #[arg(long)]
        e_inf: f64,
        #[arg(long)]
        omega_max: f64,
        #[arg(long, default_value_t = 1.5)]
        zeta: f64,
        #[arg(long)]
        noisy: bool,
    },
}

fn run(
    experiment: &str,
    config: Option<PathBuf>,
    seed: Option<u64>,
    trials: Option<usize>,
    out: Option<PathBuf>,
) -> uno_core::Result<()> {
    let id: ExperimentId = experiment.parse()?;
    let mut cfg = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let cfg = ExperimentConfig::from_json(&text)?;
            if cfg.experiment != id {
                return Err(uno_core::Error::ConfigInvalid(format!("config is for `{}`, not `{id}`", cfg.experiment)));
            }
            cfg
        }
        None => ExperimentConfig::defaults(id),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    let out = out.or_else(|| cfg.output.clone().map(PathBuf::from));
    let result = harness::run_experiment(&cfg)?;
    for line in harness::summarize(&result).values() {
        println!("{line}");
    }
    println!("wall clock {:.1} s", result.wall_clock_s.0);
    if let Some(path) = out {
        emit(&result, OutputFormat::from_path(&path), &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { experiment, config, seed, trials, out } => run(&experiment, config, seed, trials, out),
        Command::Check { full } => {
            let results = run_checks(full);
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            return if results.iter().all(|r| r.passed) { ExitCode::SUCCESS } else { ExitCode::FAILURE };
        }
        Command::PlanRate { beta_x, lambda, e_inf, omega_max, zeta, noisy } => {
            let plan = if noisy {
                plan_noisy_rate(beta_x, lambda, e_inf, omega_max, zeta)
            } else {
                plan_rate(beta_x, lambda, e_inf, omega_max, zeta)
            };
            plan.and_then(|p| {
                println!("{}", serde_json::to_string_pretty(&p)?);
                Ok(())
            })
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
