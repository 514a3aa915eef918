//! Monte Carlo estimation of false-alarm probability and detection delay.
//!
//! Trials run in parallel and are merged in trial-index order, so every
//! aggregate is independent of scheduling.

use phyfusion_core::policies::Policy;
use phyfusion_core::trial::{run_trial, TrialRecord};
use phyfusion_core::Result;
use rayon::prelude::*;
use serde::Serialize;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub trials: u64,
    pub seed: u64,
    /// First trial index; disjoint ranges give independent samples.
    pub first_trial: u64,
    pub max_horizon: u64,
}

/// Sample mean and its normal-approximation standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
}

impl MeanEstimate {
    fn from_samples(values: impl Iterator<Item = f64>) -> Self {
        let (mut n, mut sum, mut sum_sq) = (0u64, 0.0, 0.0);
        for v in values {
            n += 1;
            sum += v;
            sum_sq += v * v;
        }
        if n == 0 {
            return Self { mean: f64::NAN, stderr: f64::NAN };
        }
        let mean = sum / n as f64;
        let var = if n > 1 { ((sum_sq - n as f64 * mean * mean) / (n - 1) as f64).max(0.0) } else { 0.0 };
        Self { mean, stderr: (var / n as f64).sqrt() }
    }
}

/// Aggregates of one policy run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub trials: u64,
    pub pfa: MeanEstimate,
    /// Unconditional mean of `(tau - gamma)^+`.
    pub edd: MeanEstimate,
    pub tau: MeanEstimate,
    /// Total expected energy per trial, summed over sensors.
    pub energy: MeanEstimate,
}

impl Estimate {
    pub fn from_records(records: &[TrialRecord]) -> Self {
        Self {
            trials: records.len() as u64,
            pfa: MeanEstimate::from_samples(records.iter().map(|r| f64::from(u8::from(r.false_alarm)))),
            edd: MeanEstimate::from_samples(records.iter().map(|r| r.delay as f64)),
            tau: MeanEstimate::from_samples(records.iter().map(|r| r.tau as f64)),
            energy: MeanEstimate::from_samples(records.iter().map(TrialRecord::total_energy)),
        }
    }
}

/// All trial records in index order.
pub fn simulate(policy: &dyn Policy, run: &RunSettings) -> Result<Vec<TrialRecord>> {
    (run.first_trial..run.first_trial + run.trials)
        .into_par_iter()
        .map(|i| run_trial(policy, run.seed, i, run.max_horizon, None))
        .collect()
}

pub fn estimate(policy: &dyn Policy, run: &RunSettings) -> Result<Estimate> {
    Ok(Estimate::from_records(&simulate(policy, run)?))
}

// ---------------------------------------------------------------------------
// Curves
// ---------------------------------------------------------------------------

/// One point of a delay vs false-alarm curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub lambda: f64,
    pub mu_star: f64,
    pub pfa: f64,
    pub pfa_stderr: f64,
    pub edd: f64,
    pub edd_stderr: f64,
    pub trials: u64,
    pub policy: String,
    pub seed: u64,
    #[serde(skip)]
    pub energy: MeanEstimate,
}

impl CurvePoint {
    pub fn new(lambda: f64, mu_star: f64, policy: &str, seed: u64, est: &Estimate) -> Self {
        Self {
            lambda,
            mu_star,
            pfa: est.pfa.mean,
            pfa_stderr: est.pfa.stderr,
            edd: est.edd.mean,
            edd_stderr: est.edd.stderr,
            trials: est.trials,
            policy: policy.into(),
            seed,
            energy: est.energy,
        }
    }
}

/// Sorts by false-alarm probability, then by delay cost.
pub fn sort_curve(points: &mut [CurvePoint]) {
    points.sort_by(|a, b| a.pfa.total_cmp(&b.pfa).then(a.lambda.total_cmp(&b.lambda)));
}

/// Value of a curve quantity at a false-alarm level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interpolated {
    pub value: f64,
    pub stderr: f64,
}

/// Piecewise-linear interpolation in `log(pfa)` of `field` between the two
/// curve points bracketing `target`. Points with `pfa = 0` are skipped;
/// `None` when `target` lies outside the curve.
pub fn interpolate_at_pfa<F>(points: &[CurvePoint], target: f64, field: F) -> Option<Interpolated>
where
    F: Fn(&CurvePoint) -> (f64, f64),
{
    let mut usable: Vec<&CurvePoint> = points.iter().filter(|p| p.pfa > 0.0).collect();
    usable.sort_by(|a, b| a.pfa.total_cmp(&b.pfa));
    let x = target.ln();
    for pair in usable.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let (x0, x1) = (lo.pfa.ln(), hi.pfa.ln());
        if x < x0 || x > x1 {
            continue;
        }
        let (v0, s0) = field(lo);
        let (v1, s1) = field(hi);
        if x1 == x0 {
            return Some(Interpolated { value: 0.5 * (v0 + v1), stderr: s0.max(s1) });
        }
        let w = (x - x0) / (x1 - x0);
        return Some(Interpolated {
            value: (1.0 - w) * v0 + w * v1,
            stderr: (1.0 - w) * s0 + w * s1,
        });
    }
    None
}

/// Detection delay at `target` with its standard error.
pub fn edd_at_pfa(points: &[CurvePoint], target: f64) -> Option<Interpolated> {
    interpolate_at_pfa(points, target, |p| (p.edd, p.edd_stderr))
}

/// True when `a <= b` holds up to the combined 95% interval.
pub fn not_worse(a: Interpolated, b: Interpolated) -> bool {
    a.value <= b.value + Z95 * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt()
}
