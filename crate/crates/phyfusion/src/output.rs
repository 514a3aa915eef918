//! CSV and JSON artifacts.
//!
//! Every CSV starts with a `# config-hash:` line, uses `.` decimals and LF
//! line endings, and formats floats with Rust's shortest round-trip form.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use phyfusion_core::dp::{BeliefGrid, ValueFunction};
use phyfusion_core::trial::TraceRow;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::AppError;
use crate::experiments::OrderingRow;
use crate::sim::CurvePoint;

pub const CURVE_HEADER: &str = "lambda,mu_star,pfa,pfa_stderr,edd,edd_stderr,trials,policy,seed";
pub const TRACE_HEADER: &str = "stage,alpha_sq,c,mu,policy,gamma";

/// Hex SHA-256 of the canonical resolved configuration.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let digest = Sha256::digest(cfg.canonical_json().as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn preamble(hash: &str, header: &str) -> String {
    format!("# config-hash: {hash}\n{header}\n")
}

pub fn curve_row(p: &CurvePoint) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}\n",
        p.lambda, p.mu_star, p.pfa, p.pfa_stderr, p.edd, p.edd_stderr, p.trials, p.policy, p.seed
    )
}

pub fn curve_csv(hash: &str, points: &[CurvePoint]) -> String {
    let mut out = preamble(hash, CURVE_HEADER);
    for p in points {
        out.push_str(&curve_row(p));
    }
    out
}

pub fn grid_csv(hash: &str, grid: &BeliefGrid, values: &[f64]) -> String {
    let mut out = preamble(hash, "mu,J");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{},{}", grid.point(i), v);
    }
    out
}

pub fn value_function_csv(hash: &str, vf: &ValueFunction) -> String {
    grid_csv(hash, &vf.grid, &vf.values)
}

pub fn trace_csv(hash: &str, rows: &[TraceRow]) -> String {
    let mut out = preamble(hash, TRACE_HEADER);
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.stage, r.alpha_sq, r.c, r.mu, r.policy, r.gamma);
    }
    out
}

pub fn ordering_csv(hash: &str, rows: &[OrderingRow]) -> String {
    let mut out = preamble(hash, "pfa_target,policy,edd,edd_stderr,ordered");
    for r in rows {
        let (edd, se) = match r.edd {
            Some(e) => (e.value.to_string(), e.stderr.to_string()),
            None => (String::new(), String::new()),
        };
        let ordered = r.ordered.map(|b| b.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{}", r.pfa_target, r.policy, edd, se, ordered);
    }
    out
}

pub fn write(path: &Path, contents: &str) -> Result<(), AppError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

/// Appends a curve row, writing the preamble when the file is new or empty.
pub fn append_curve_row(path: &Path, hash: &str, point: &CurvePoint) -> Result<(), AppError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        file.write_all(preamble(hash, CURVE_HEADER).as_bytes())?;
    }
    file.write_all(curve_row(point).as_bytes())?;
    Ok(())
}

/// Resolved configuration plus run-specific notes.
pub fn metadata_json(cfg: &ExperimentConfig, notes: serde_json::Value) -> String {
    let doc = serde_json::json!({
        "config_hash": config_hash(cfg),
        "config": cfg,
        "notes": notes,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("metadata serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Estimate, MeanEstimate};

    #[test]
    fn curve_rows_follow_the_header() {
        let m = |v| MeanEstimate { mean: v, stderr: 0.25 };
        let est = Estimate { trials: 4, pfa: m(0.5), edd: m(2.0), tau: m(3.0), energy: m(1.0) };
        let p = CurvePoint::new(0.01, 0.8, "optimal", 7, &est);
        let csv = curve_csv("abc", &[p]);
        assert_eq!(csv, format!("# config-hash: abc\n{CURVE_HEADER}\n0.01,0.8,0.5,0.25,2,0.25,4,optimal,7\n"));
        assert!(!csv.contains('\r'));
    }
}
