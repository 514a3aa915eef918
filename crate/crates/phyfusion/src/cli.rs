//! Command-line driver.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use phyfusion_core::trial::run_trial;

use crate::config::{ExperimentConfig, OneOrMany, PolicyKind};
use crate::error::AppError;
use crate::experiments::{energy_match, ordering_report, prepare, run_point, scalar_recursion, sweep};
use crate::output;

#[derive(Debug, Parser)]
#[command(name = "phyfusion", version, about = "Quickest change detection over a Gaussian multiple-access channel")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the value function at the first configured lambda.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Also write the uninformative-sample recursion (requires m0 == m1).
        #[arg(long)]
        validate_scalar: bool,
    },
    /// Estimate one (pfa, edd) point and append it to run.csv.
    Run {
        #[command(flatten)]
        common: Common,
        /// Write the per-stage trace of one trial (default trial 0).
        #[arg(long, num_args = 0..=1, default_missing_value = "0", value_name = "TRIAL")]
        trace: Option<u64>,
    },
    /// Trace a delay vs false-alarm curve over the configured lambdas.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep every policy in the `compare` block and report the ordering.
    Compare {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured trial count.
    #[arg(long)]
    pub trials: Option<u64>,
    /// Overrides the configured policy.
    #[arg(long, value_name = "NAME")]
    pub policy: Option<String>,
    /// Overrides the configured delay cost.
    #[arg(long)]
    pub lambda: Option<f64>,
}

impl Common {
    /// Loads the configuration with the command-line overrides applied.
    pub fn load(&self) -> Result<ExperimentConfig, AppError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(trials) = self.trials {
            cfg.trials = trials;
        }
        if let Some(name) = &self.policy {
            cfg.policy = PolicyKind::parse(name).ok_or_else(|| AppError::Config(format!("unknown policy `{name}`")))?;
        }
        if let Some(lambda) = self.lambda {
            cfg.lambda = OneOrMany::One(lambda);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_metadata(dir: &Path, cfg: &ExperimentConfig, notes: serde_json::Value) -> Result<(), AppError> {
    output::write(&dir.join("metadata.json"), &output::metadata_json(cfg, notes))
}

fn standard_notes(cfg: &ExperimentConfig) -> serde_json::Value {
    let mut notes = serde_json::json!({
        "trials": cfg.trials,
        "edd_estimator": "unconditional mean of (tau - gamma)^+",
        "streams": "ChaCha8 keyed by seed; stream = trial index; slot 0 for the change time, slot k for stage k",
    });
    if cfg.policy == PolicyKind::Quantizer || cfg.compare.as_ref().is_some_and(|c| c.policies.contains(&PolicyKind::Quantizer)) {
        notes["quantizer"] = "bits delivered error-free at the multiple-access sum-rate bound".into();
    }
    notes
}

pub fn cmd_solve(common: &Common, validate_scalar: bool) -> Result<(), AppError> {
    let cfg = common.load()?;
    let hash = output::config_hash(&cfg);
    let lambda = cfg.lambdas()[0];
    let prepared = prepare(&cfg, cfg.policy, lambda)?;
    let vf = &prepared.vf;
    output::write(&common.out.join("value_function.csv"), &output::value_function_csv(&hash, vf))?;
    if validate_scalar {
        let (grid, values) = scalar_recursion(&cfg, lambda)?;
        output::write(&common.out.join("scalar_oracle.csv"), &output::grid_csv(&hash, &grid, &values))?;
    }
    let mut notes = standard_notes(&cfg);
    notes["lambda"] = lambda.into();
    notes["mu_star"] = vf.mu_star.into();
    notes["stop_immediately"] = vf.stop_immediately.into();
    notes["iterations"] = vf.iterations.into();
    notes["final_residual"] = vf.final_residual().into();
    if let Some(cap) = vf.search_cap {
        notes["alpha_hi"] = cap.into();
    }
    write_metadata(&common.out, &cfg, notes)?;
    println!("mu_star={} iterations={} lambda={}", vf.mu_star, vf.iterations, lambda);
    Ok(())
}

pub fn cmd_run(common: &Common, trace: Option<u64>) -> Result<(), AppError> {
    let cfg = common.load()?;
    let hash = output::config_hash(&cfg);
    let lambda = cfg.lambdas()[0];
    let point = run_point(&cfg, cfg.policy, lambda)?;
    output::append_curve_row(&common.out.join("run.csv"), &hash, &point)?;
    if let Some(index) = trace {
        let prepared = prepare(&cfg, cfg.policy, lambda)?;
        let mut rows = Vec::new();
        run_trial(prepared.policy.as_ref(), cfg.seed, index, cfg.max_horizon, Some(&mut rows))
            .map_err(|source| AppError::Solver { lambda, source })?;
        output::write(&common.out.join("trace.csv"), &output::trace_csv(&hash, &rows))?;
    }
    write_metadata(&common.out, &cfg, standard_notes(&cfg))?;
    print!("{}", output::curve_row(&point));
    Ok(())
}

pub fn cmd_sweep(common: &Common) -> Result<(), AppError> {
    let cfg = common.load()?;
    let hash = output::config_hash(&cfg);
    let curve = sweep(&cfg, cfg.policy)?;
    let path = common.out.join(format!("curve_{}.csv", cfg.policy));
    output::write(&path, &output::curve_csv(&hash, &curve))?;
    write_metadata(&common.out, &cfg, standard_notes(&cfg))?;
    println!("{} points -> {}", curve.len(), path.display());
    Ok(())
}

pub fn cmd_compare(common: &Common) -> Result<(), AppError> {
    let cfg = common.load()?;
    let compare = cfg.compare.clone().ok_or_else(|| AppError::Config("`compare` needs a `compare` block".into()))?;
    let hash = output::config_hash(&cfg);
    let mut curves = Vec::new();
    for &kind in &compare.policies {
        let curve = sweep(&cfg, kind)?;
        output::write(&common.out.join(format!("curve_{kind}.csv")), &output::curve_csv(&hash, &curve))?;
        curves.push((kind, curve));
    }
    let report = ordering_report(&curves, &compare.pfa_targets);
    output::write(&common.out.join("compare.csv"), &output::ordering_csv(&hash, &report))?;
    for row in &report {
        match (row.edd, row.ordered) {
            (Some(e), Some(ok)) => println!(
                "pfa={:.5} {:<20} edd={:.4} (se {:.4}) {}",
                row.pfa_target,
                row.policy,
                e.value,
                e.stderr,
                if ok { "ordered" } else { "OUT OF ORDER" }
            ),
            (Some(e), None) => {
                println!("pfa={:.5} {:<20} edd={:.4} (se {:.4})", row.pfa_target, row.policy, e.value, e.stderr)
            }
            (None, _) => println!("pfa={:.5} {:<20} not reached", row.pfa_target, row.policy),
        }
    }
    let mut notes = standard_notes(&cfg);
    if let Some(target) = compare.energy_match_pfa {
        let m = energy_match(&cfg, target, 0.02, 6)?;
        output::write(&common.out.join("curve_energy_matched.csv"), &output::curve_csv(&hash, &m.energy_curve))?;
        output::write(&common.out.join("curve_power_matched.csv"), &output::curve_csv(&hash, &m.power_curve))?;
        println!(
            "energy match at pfa={}: energy edd={:.4} (se {:.4}) spent {:.3}; power {:.4} edd={:.4} (se {:.4}) spent {:.3}; {}",
            target,
            m.energy_edd.value,
            m.energy_edd.stderr,
            m.energy_spent.value,
            m.power,
            m.power_edd.value,
            m.power_edd.stderr,
            m.power_spent.value,
            if m.energy_not_worse() { "energy not worse" } else { "energy worse" }
        );
        notes["energy_match"] = serde_json::json!({
            "pfa_target": target,
            "matched_power": m.power,
            "energy_edd": m.energy_edd,
            "power_edd": m.power_edd,
            "energy_spent": m.energy_spent,
            "power_spent": m.power_spent,
        });
    }
    write_metadata(&common.out, &cfg, notes)?;
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<(), AppError> {
    match &cli.command {
        Command::Solve { common, validate_scalar } => cmd_solve(common, *validate_scalar),
        Command::Run { common, trace } => cmd_run(common, *trace),
        Command::Sweep { common } => cmd_sweep(common),
        Command::Compare { common } => cmd_compare(common),
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

