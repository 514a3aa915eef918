//! Builds policies from a configuration and runs sweeps and comparisons.

use phyfusion_core::dp::{
    energy_bellman_solve, solve_value_function, solve_with_kernel, BeliefGrid, ValueFunction,
};
use phyfusion_core::model::{Budget, NetworkModel};
use phyfusion_core::policies::{
    BeamformingPolicy, ChannelEstimation, EnergyPolicy, OptimalPolicy, Policy, QuantizerDesign, QuantizerKernel,
    QuantizerPolicy, SuboptimalPolicy,
};
use serde::Serialize;

use crate::config::{ExperimentConfig, PolicyKind, ThresholdSpec};
use crate::error::AppError;
use crate::sim::{edd_at_pfa, estimate, interpolate_at_pfa, not_worse, sort_curve, CurvePoint, Interpolated, RunSettings};

pub struct Prepared {
    pub policy: Box<dyn Policy>,
    pub vf: ValueFunction,
}

fn at_lambda(lambda: f64) -> impl Fn(phyfusion_core::Error) -> AppError {
    move |source| AppError::Solver { lambda, source }
}

fn quantizer_design(cfg: &ExperimentConfig, net: &NetworkModel) -> Result<QuantizerDesign, AppError> {
    let model = cfg.change_model()?;
    let design = match &cfg.quantizer.thresholds {
        ThresholdSpec::Auto(_) => QuantizerDesign::kl_optimal(&model, net),
        ThresholdSpec::Values(t) => QuantizerDesign::new(&model, net, t.clone()),
    };
    design.map_err(|e| AppError::Config(format!("quantizer: {e}")))
}

fn pilot_powers(cfg: &ExperimentConfig, net: &NetworkModel) -> Result<Vec<f64>, AppError> {
    if let Some(p) = &cfg.channel.pilot_power {
        return Ok(p.clone());
    }
    net.sensors()
        .iter()
        .enumerate()
        .map(|(i, s)| match s.budget {
            Budget::Power(p) => Ok(p),
            Budget::Energy(_) => Err(AppError::Config(format!("sensor {i}: beamforming needs a `power` budget"))),
        })
        .collect()
}

/// Centralized reference: the same sensors fused without channel noise.
pub fn centralized_network(net: &NetworkModel) -> Result<NetworkModel, AppError> {
    Ok(net.with_mac_sigma_sq(0.0)?)
}

/// Solves the value function and builds the policy of `kind` at `lambda`.
pub fn prepare(cfg: &ExperimentConfig, kind: PolicyKind, lambda: f64) -> Result<Prepared, AppError> {
    let model = cfg.change_model()?;
    let net = cfg.network()?;
    let settings = cfg.solver_settings();
    let quad = cfg.quadrature()?;
    let err = at_lambda(lambda);
    let prepared = match kind {
        PolicyKind::Optimal | PolicyKind::Suboptimal => {
            let vf = solve_value_function(&model, &net, lambda, &settings, &quad).map_err(&err)?;
            let policy: Box<dyn Policy> = if kind == PolicyKind::Optimal {
                Box::new(OptimalPolicy::new(model, net, &vf)?)
            } else {
                Box::new(SuboptimalPolicy::new(model, net, &vf)?)
            };
            Prepared { policy, vf }
        }
        PolicyKind::Centralized => {
            let net = centralized_network(&net)?;
            let vf = solve_value_function(&model, &net, lambda, &settings, &quad).map_err(&err)?;
            let policy = OptimalPolicy::labelled("centralized", model, net, &vf)?;
            Prepared { policy: Box::new(policy), vf }
        }
        PolicyKind::Energy => {
            let weights = cfg.energy_weights(lambda)?;
            let vf = energy_bellman_solve(&model, &net, &weights, &cfg.energy_settings(), &quad).map_err(&err)?;
            let policy = EnergyPolicy::new(model, net, vf.clone())?;
            Prepared { policy: Box::new(policy), vf }
        }
        PolicyKind::Quantizer => {
            let design = quantizer_design(cfg, &net)?;
            let kernel = QuantizerKernel::new(model, design.clone());
            let vf = solve_with_kernel(&kernel, lambda, &settings).map_err(&err)?;
            let policy = QuantizerPolicy::new(model, net, design, &vf)?;
            Prepared { policy: Box::new(policy), vf }
        }
        PolicyKind::Beamforming | PolicyKind::BeamformingPerfect => {
            let nominal = BeamformingPolicy::nominal_network(&net)?;
            let vf = solve_value_function(&model, &nominal, lambda, &settings, &quad).map_err(&err)?;
            let estimation = if kind == PolicyKind::BeamformingPerfect {
                ChannelEstimation::Perfect
            } else {
                ChannelEstimation::Pilots { count: cfg.channel.pilots, power: pilot_powers(cfg, &net)? }
            };
            let policy = BeamformingPolicy::new(model, net, estimation, cfg.channel.block_length, &vf)?;
            Prepared { policy: Box::new(policy), vf }
        }
    };
    Ok(prepared)
}

pub fn run_settings(cfg: &ExperimentConfig) -> RunSettings {
    RunSettings { trials: cfg.trials, seed: cfg.seed, first_trial: 0, max_horizon: cfg.max_horizon }
}

/// One curve point for `kind` at `lambda`.
pub fn run_point(cfg: &ExperimentConfig, kind: PolicyKind, lambda: f64) -> Result<CurvePoint, AppError> {
    let prepared = prepare(cfg, kind, lambda)?;
    let est = estimate(prepared.policy.as_ref(), &run_settings(cfg)).map_err(at_lambda(lambda))?;
    Ok(CurvePoint::new(lambda, prepared.vf.mu_star, kind.as_str(), cfg.seed, &est))
}

/// Curve over the configured delay costs, sorted by false-alarm probability.
pub fn sweep(cfg: &ExperimentConfig, kind: PolicyKind) -> Result<Vec<CurvePoint>, AppError> {
    let mut points = cfg
        .lambdas()
        .into_iter()
        .map(|lambda| run_point(cfg, kind, lambda))
        .collect::<Result<Vec<_>, _>>()?;
    sort_curve(&mut points);
    Ok(points)
}

const SCALAR_TOL: f64 = 1e-12;

/// Value function of the belief-only problem with uninformative samples:
/// `J(mu) = min(1 - mu, lambda mu + J(mu + (1 - mu) p))` on the solver grid.
pub fn scalar_recursion(cfg: &ExperimentConfig, lambda: f64) -> Result<(BeliefGrid, Vec<f64>), AppError> {
    let model = cfg.change_model()?;
    if model.m0() != model.m1() {
        return Err(AppError::Config("the scalar oracle needs `m0 == m1`".into()));
    }
    let settings = cfg.solver_settings();
    let grid = BeliefGrid::new(settings.grid_points);
    let mut j: Vec<f64> = grid.points().iter().map(|m| 1.0 - m).collect();
    for _ in 0..settings.max_iterations {
        let next: Vec<f64> = grid
            .points()
            .iter()
            .map(|&mu| {
                let beta = mu + (1.0 - mu) * model.hazard();
                (1.0 - mu).min(lambda * mu + grid.interpolate(&j, beta))
            })
            .collect();
        let diff = next.iter().zip(&j).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        j = next;
        if diff < SCALAR_TOL {
            return Ok((grid, j));
        }
    }
    Err(AppError::Solver {
        lambda,
        source: phyfusion_core::Error::NotConverged { iterations: settings.max_iterations, residual: f64::NAN },
    })
}

// ---------------------------------------------------------------------------
// Comparisons
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingRow {
    pub pfa_target: f64,
    pub policy: String,
    /// `None` when the curve does not reach the target.
    pub edd: Option<Interpolated>,
    /// The delay is not worse than the next policy in the configured order.
    pub ordered: Option<bool>,
}

/// Delays of every curve at each target, checked against the listed order.
pub fn ordering_report(curves: &[(PolicyKind, Vec<CurvePoint>)], targets: &[f64]) -> Vec<OrderingRow> {
    let mut rows = Vec::new();
    for &target in targets {
        let edds: Vec<Option<Interpolated>> = curves.iter().map(|(_, c)| edd_at_pfa(c, target)).collect();
        for (i, (kind, _)) in curves.iter().enumerate() {
            let ordered = match (edds[i], edds.get(i + 1).copied().flatten()) {
                (Some(a), Some(b)) => Some(not_worse(a, b)),
                _ => None,
            };
            rows.push(OrderingRow { pfa_target: target, policy: kind.as_str().into(), edd: edds[i], ordered });
        }
    }
    rows
}

/// Energy policy against the power-constrained optimum spending the same
/// expected energy at the same false-alarm level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyMatch {
    pub pfa_target: f64,
    pub energy_edd: Interpolated,
    pub energy_spent: Interpolated,
    pub power: f64,
    pub power_edd: Interpolated,
    pub power_spent: Interpolated,
    pub energy_curve: Vec<CurvePoint>,
    pub power_curve: Vec<CurvePoint>,
}

impl EnergyMatch {
    pub fn energy_not_worse(&self) -> bool {
        not_worse(self.energy_edd, self.power_edd)
    }
}

fn energy_at(points: &[CurvePoint], target: f64) -> Option<Interpolated> {
    interpolate_at_pfa(points, target, |p| (p.energy.mean, p.energy.stderr))
}

fn unreached(what: &str, target: f64) -> AppError {
    AppError::Config(format!("the {what} curve does not bracket pfa = {target}; widen `lambda`"))
}

/// Matches expected total energy by rescaling a common per-sensor power
/// until the power-constrained curve spends what the energy curve spends
/// at `pfa_target`. Relative energy mismatch below `rel_tol` ends the search.
pub fn energy_match(
    cfg: &ExperimentConfig,
    pfa_target: f64,
    rel_tol: f64,
    max_rounds: usize,
) -> Result<EnergyMatch, AppError> {
    let energy_curve = sweep(cfg, PolicyKind::Energy)?;
    let energy_edd = edd_at_pfa(&energy_curve, pfa_target).ok_or_else(|| unreached("energy", pfa_target))?;
    let energy_spent = energy_at(&energy_curve, pfa_target).ok_or_else(|| unreached("energy", pfa_target))?;

    let mut power = cfg
        .sensors
        .iter()
        .map(|s| s.energy_budget.or(s.power).unwrap_or(1.0))
        .fold(f64::INFINITY, f64::min);
    let mut round = 0;
    loop {
        let mut power_cfg = cfg.clone();
        for s in &mut power_cfg.sensors {
            s.power = Some(power);
            s.energy_budget = None;
        }
        let power_curve = sweep(&power_cfg, PolicyKind::Optimal)?;
        let power_edd = edd_at_pfa(&power_curve, pfa_target).ok_or_else(|| unreached("power", pfa_target))?;
        let power_spent = energy_at(&power_curve, pfa_target).ok_or_else(|| unreached("power", pfa_target))?;
        let ratio = energy_spent.value / power_spent.value;
        round += 1;
        if (ratio - 1.0).abs() <= rel_tol || round >= max_rounds {
            return Ok(EnergyMatch {
                pfa_target,
                energy_edd,
                energy_spent,
                power,
                power_edd,
                power_spent,
                energy_curve,
                power_curve,
            });
        }
        power *= ratio;
    }
}
