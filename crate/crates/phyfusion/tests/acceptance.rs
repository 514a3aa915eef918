//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs with `cargo test -p phyfusion --test acceptance`. The process exits
//! non-zero when any criterion fails.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use oracles::{brute_force_posterior, min_variance_grid, RawSensor};
use phyfusion::config::{ExperimentConfig, PolicyKind};
use phyfusion::experiments::{energy_match, prepare, sweep};
use phyfusion::sim::{edd_at_pfa, not_worse, CurvePoint, Interpolated};
use phyfusion_core::control::{amplitude_caps, optimal_alpha, optimal_control};
use phyfusion_core::dp::{expected_cost_to_go, solve_value_function, SolverSettings, ValueFunction};
use phyfusion_core::model::{Belief, ChangeModel, NetworkModel, Sensor};
use phyfusion_core::quadrature::GaussHermite;
use phyfusion_core::trial::run_trial;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SETUP1: &str = include_str!("../../../configs/setup1.json");
const ENERGY: &str = include_str!("../../../configs/energy.json");
const BEAMFORMING: &str = include_str!("../../../configs/beamforming.json");

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn e(k: i32) -> f64 {
    (-(k as f64)).exp()
}

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(text).expect("bundled configuration is valid")
}

fn setup1() -> (ChangeModel, NetworkModel) {
    let model = ChangeModel::new(0.0, 0.75, 0.05, 0.0).unwrap();
    let net = NetworkModel::symmetric(2, Sensor::with_power(1.0, 1.0, 7.5), 1.0).unwrap();
    (model, net)
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn at(curve: &[CurvePoint], target: f64, label: &str) -> Result<Interpolated, String> {
    edd_at_pfa(curve, target).ok_or_else(|| format!("{label} curve does not reach pfa {target:.4}"))
}

fn fmt(x: Interpolated) -> String {
    format!("{:.3}±{:.3}", x.value, x.stderr)
}

/// Checks that each curve is not worse than the next at `target`.
fn chain(curves: &[(&str, &[CurvePoint])], target: f64) -> Verdict {
    let values = curves
        .iter()
        .map(|(label, c)| at(c, target, label))
        .collect::<Result<Vec<_>, _>>()?;
    let text = curves
        .iter()
        .zip(&values)
        .map(|((label, _), v)| format!("{label} {}", fmt(*v)))
        .collect::<Vec<_>>()
        .join(" <= ");
    if values.windows(2).all(|w| not_worse(w[0], w[1])) {
        Ok(text)
    } else {
        Err(text)
    }
}

// ---------------------------------------------------------------------------
// Control and model
// ---------------------------------------------------------------------------

fn control_oracle() -> Verdict {
    let start = Instant::now();
    let model = ChangeModel::new(0.0, 0.75, 0.05, 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let n = [2, 3, 5][trial % 3];
        let sensors = (0..n)
            .map(|_| {
                Sensor::with_power(
                    log_uniform(&mut rng, 0.1, 10.0),
                    log_uniform(&mut rng, 0.1, 10.0),
                    log_uniform(&mut rng, 0.1, 10.0),
                )
            })
            .collect();
        let net = NetworkModel::new(sensors, log_uniform(&mut rng, 0.01, 10.0)).unwrap();
        let beta = rng.random::<f64>();
        let caps = amplitude_caps(&net, beta, &model).unwrap();
        let got = net.effective_variance(&optimal_alpha(&caps, &net)).unwrap();
        let raw: Vec<RawSensor> = net
            .sensors()
            .iter()
            .zip(&caps.alpha_max)
            .map(|(s, &a)| RawSensor { sigma_sq: s.sigma_obs_sq, gain: s.gain, alpha_max: a })
            .collect();
        let (_, oracle) = min_variance_grid(&raw, net.mac_sigma_sq());
        worst = worst.max((got - oracle) / oracle);
    }
    let elapsed = start.elapsed();
    let detail = format!("worst relative excess {worst:.2e} over 100 instances in {:.1}s", elapsed.as_secs_f64());
    if worst <= 1e-6 && elapsed < Duration::from_secs(60) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn symmetric_saturation() -> Verdict {
    let model = ChangeModel::new(0.0, 0.75, 0.05, 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for case in 0..200 {
        let n = 1 + case % 6;
        let sensor = Sensor::with_power(
            log_uniform(&mut rng, 0.1, 10.0),
            log_uniform(&mut rng, 0.1, 10.0),
            log_uniform(&mut rng, 0.1, 10.0),
        );
        let net = NetworkModel::symmetric(n, sensor, log_uniform(&mut rng, 0.01, 10.0)).unwrap();
        let beta = rng.random::<f64>();
        let caps = amplitude_caps(&net, beta, &model).unwrap();
        let control = optimal_control(beta, &model, &net).unwrap();
        if control.alpha != caps.alpha_max {
            return Err(format!("case {case}: {:?} vs caps {:?}", control.alpha, caps.alpha_max));
        }
    }
    Ok("alpha equals alpha_max bit-for-bit on 200 symmetric networks".into())
}

fn posterior_exactness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let m0 = rng.random::<f64>() * 2.0 - 1.0;
        let m1 = m0 + rng.random::<f64>() * 2.0 - 1.0;
        let p = rng.random::<f64>() * 0.5;
        let nu = rng.random::<f64>() * 0.5;
        let model = ChangeModel::new(m0, m1, p, nu).unwrap();
        let n = rng.random_range(1..=6);
        let gamma = rng.random_range(0..=n + 1);
        let (mut ys, mut vars) = (Vec::new(), Vec::new());
        for k in 1..=n {
            let var = 0.1 + rng.random::<f64>() * 3.0;
            let z: f64 = rng.sample(StandardNormal);
            ys.push(if k >= gamma { m1 } else { m0 } + var.sqrt() * z);
            vars.push(var);
        }
        let mut mu = Belief::new(nu).unwrap();
        for (y, v) in ys.iter().zip(&vars) {
            mu = model.posterior_update(*y, mu, *v).map_err(|e| e.to_string())?;
        }
        let oracle = brute_force_posterior(m0, m1, p, nu, &ys, &vars);
        worst = worst.max((mu.value() - oracle).abs() / oracle);
    }
    let detail = format!("worst relative error {worst:.2e} over 1000 sequences");
    if worst <= 1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// Value function
// ---------------------------------------------------------------------------

fn solve_setup1(points: usize) -> ValueFunction {
    let (model, net) = setup1();
    let settings = SolverSettings { grid_points: points, tol: 1e-4, ..Default::default() };
    solve_value_function(&model, &net, 0.01, &settings, &GaussHermite::default()).unwrap()
}

fn value_function_properties() -> Verdict {
    let start = Instant::now();
    let vf = solve_setup1(1000);
    let fine = solve_setup1(2000);
    let mut failures = Vec::new();
    if vf.final_residual() >= 1e-4 {
        failures.push(format!("residual {}", vf.final_residual()));
    }
    if *vf.values.last().unwrap() != 0.0 {
        failures.push("J(1) != 0".into());
    }
    let curvature = vf.values.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).fold(f64::MIN, f64::max);
    if curvature > 1e-6 {
        failures.push(format!("second difference {curvature:.2e}"));
    }
    // Continuation region is a prefix of the grid: one crossing into stopping.
    let continuing: Vec<bool> =
        (0..vf.grid.len()).map(|i| vf.values[i] < 1.0 - vf.grid.point(i)).collect();
    let crossings = continuing.windows(2).filter(|w| w[0] != w[1]).count();
    if !continuing[0] || crossings != 1 {
        failures.push(format!("{crossings} crossings"));
    }
    let shift = (vf.mu_star - fine.mu_star).abs();
    if shift >= vf.grid.spacing() {
        failures.push(format!("mu_star moved {shift:.2e} under grid doubling"));
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(300) {
        failures.push(format!("took {:.0}s", elapsed.as_secs_f64()));
    }
    let detail = format!(
        "mu_star {:.6} ({} sweeps), 2000-point mu_star {:.6}, max second difference {curvature:.1e}, {:.2}s",
        vf.mu_star,
        vf.iterations,
        fine.mu_star,
        elapsed.as_secs_f64()
    );
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", failures.join("; ")))
    }
}

fn ali_silvey() -> Verdict {
    let (model, _) = setup1();
    let vf = solve_setup1(1000);
    let quad = GaussHermite::default();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst = f64::NEG_INFINITY;
    for b in 0..20 {
        let mu = Belief::new((b as f64 + 0.5) / 20.0).unwrap();
        for _ in 0..50 {
            let s1 = (rng.random::<f64>() * 6.0 - 3.0).exp();
            let s2 = (rng.random::<f64>() * 6.0 - 3.0).exp();
            let (lo, hi) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
            let a = expected_cost_to_go(mu, lo, &vf, &model, &quad);
            let c = expected_cost_to_go(mu, hi, &vf, &model, &quad);
            worst = worst.max(a - c);
        }
    }
    let detail = format!("max of J-bar(low variance) - J-bar(high variance) {worst:.2e} over 20 beliefs x 50 variance pairs");
    if worst <= 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// Monte Carlo curves
// ---------------------------------------------------------------------------

fn setup1_ordering() -> Verdict {
    let start = Instant::now();
    let cfg = config(SETUP1);
    let curves: Vec<(PolicyKind, Vec<CurvePoint>)> = cfg
        .compare
        .as_ref()
        .unwrap()
        .policies
        .iter()
        .map(|&k| sweep(&cfg, k).map(|c| (k, c)).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let get = |k: PolicyKind| curves.iter().find(|(kind, _)| *kind == k).unwrap().1.as_slice();
    let mut lines = Vec::new();
    let mut ok = true;
    for k in 1..=3 {
        let row = chain(
            &[
                ("centralized", get(PolicyKind::Centralized)),
                ("optimal", get(PolicyKind::Optimal)),
                ("suboptimal", get(PolicyKind::Suboptimal)),
                ("quantizer", get(PolicyKind::Quantizer)),
            ],
            e(k),
        );
        ok &= row.is_ok();
        lines.push(format!("e^-{k}: {}", row.unwrap_or_else(|s| s)));
    }
    let detail = format!("{} trials/point, {:.0}s; {}", cfg.trials, start.elapsed().as_secs_f64(), lines.join("; "));
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn channel_snr_degradation() -> Verdict {
    let base = config(SETUP1);
    let power = 7.5;
    let mut curves = Vec::new();
    for (label, mac) in [
        ("inf dB", 0.0),
        ("3 dB", power / 10f64.powf(0.3)),
        ("0 dB", power),
        ("-3 dB", power * 10f64.powf(0.3)),
    ] {
        let mut cfg = base.clone();
        cfg.mac_sigma_sq = mac;
        curves.push((label, sweep(&cfg, PolicyKind::Optimal).map_err(|e| e.to_string())?));
    }
    let refs: Vec<(&str, &[CurvePoint])> = curves.iter().map(|(l, c)| (*l, c.as_slice())).collect();
    chain(&refs, e(2)).map(|s| format!("at e^-2: {s}"))
}

fn energy_advantage() -> Verdict {
    let start = Instant::now();
    let cfg = config(ENERGY);
    let target = e(4);
    let m = energy_match(&cfg, target, 0.02, 6).map_err(|e| e.to_string())?;
    let matched = format!(
        "energy {} (spent {:.2}) vs power {:.4}/stage {} (spent {:.2})",
        fmt(m.energy_edd),
        m.energy_spent.value,
        m.power,
        fmt(m.power_edd),
        m.power_spent.value
    );

    // Mean alpha^2 before and after the change over the first 2000 trials.
    let lambda = cfg.lambdas()[1];
    let prepared = prepare(&cfg, PolicyKind::Energy, lambda).map_err(|e| e.to_string())?;
    let (mut before, mut after) = ((0.0, 0u64), (0.0, 0u64));
    for trial in 0..2000 {
        let mut rows = Vec::new();
        run_trial(prepared.policy.as_ref(), cfg.seed, trial, cfg.max_horizon, Some(&mut rows))
            .map_err(|e| e.to_string())?;
        for r in rows {
            let slot = if r.stage < r.gamma { &mut before } else { &mut after };
            slot.0 += r.alpha_sq;
            slot.1 += 1;
        }
    }
    let (pre, post) = (before.0 / before.1 as f64, after.0 / after.1 as f64);
    let detail = format!(
        "at e^-4: {matched}; trace mean alpha^2 before change {pre:.4}, after {post:.4}; {:.0}s",
        start.elapsed().as_secs_f64()
    );
    if m.energy_not_worse() && pre < post {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn channel_estimation() -> Verdict {
    let cfg = config(BEAMFORMING);
    let perfect = sweep(&cfg, PolicyKind::BeamformingPerfect).map_err(|e| e.to_string())?;
    let estimated = sweep(&cfg, PolicyKind::Beamforming).map_err(|e| e.to_string())?;
    let quantizer = sweep(&cfg, PolicyKind::Quantizer).map_err(|e| e.to_string())?;
    chain(&[("perfect", &perfect), ("estimated", &estimated), ("quantizer", &quantizer)], e(2))
        .map(|s| format!("K=1 at e^-2: {s}"))
}

// ---------------------------------------------------------------------------
// Determinism
// ---------------------------------------------------------------------------

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_phyfusion")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn determinism() -> Verdict {
    let root = std::env::temp_dir().join(format!("phyfusion-acceptance-{}", std::process::id()));
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/setup1.json");
    let config = config.to_str().unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let dir = root.join(run);
        let out = dir.to_str().unwrap();
        cli(&["solve", "--config", config, "--out", out])?;
        cli(&["run", "--config", config, "--trials", "20000", "--trace", "7", "--out", out])?;
        cli(&["sweep", "--config", config, "--trials", "20000", "--policy", "quantizer", "--out", out])?;
        cli(&["compare", "--config", config, "--trials", "5000", "--out", out])?;
        outputs.push(dir);
    }
    let files = [
        "value_function.csv",
        "run.csv",
        "trace.csv",
        "curve_quantizer.csv",
        "curve_centralized.csv",
        "curve_optimal.csv",
        "curve_suboptimal.csv",
        "compare.csv",
    ];
    let mut differing = Vec::new();
    for f in files {
        let a = std::fs::read(outputs[0].join(f)).map_err(|e| format!("{f}: {e}"))?;
        let b = std::fs::read(outputs[1].join(f)).map_err(|e| format!("{f}: {e}"))?;
        if a != b {
            differing.push(f);
        }
    }
    let _ = std::fs::remove_dir_all(&root);
    if differing.is_empty() {
        Ok(format!("{} CSV files byte-identical across reruns", files.len()))
    } else {
        Err(format!("differing: {differing:?}"))
    }
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("control-oracle equivalence", control_oracle),
        ("symmetric saturation", symmetric_saturation),
        ("posterior exactness", posterior_exactness),
        ("value-function properties", value_function_properties),
        ("ali-silvey monotonicity", ali_silvey),
        ("setup-1 ordering", setup1_ordering),
        ("channel-snr degradation", channel_snr_degradation),
        ("energy advantage", energy_advantage),
        ("channel-estimation robustness", channel_estimation),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let verdict = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        match verdict {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
