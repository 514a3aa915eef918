//! JSON experiment configuration.
//!
//! Unknown keys are rejected. Every default is filled in on load so the
//! resolved document written next to the results is complete.

use std::fmt;
use std::path::Path;

use phyfusion_core::dp::{EnergySettings, EnergyWeights, SolverSettings};
use phyfusion_core::model::{Budget, ChangeModel, NetworkModel, Sensor};
use phyfusion_core::quadrature::GaussHermite;
use serde::{Deserialize, Serialize};

use crate::error::AppError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Optimal,
    Suboptimal,
    Energy,
    Quantizer,
    Beamforming,
    BeamformingPerfect,
    Centralized,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 7] = [
        PolicyKind::Optimal,
        PolicyKind::Suboptimal,
        PolicyKind::Energy,
        PolicyKind::Quantizer,
        PolicyKind::Beamforming,
        PolicyKind::BeamformingPerfect,
        PolicyKind::Centralized,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Optimal => "optimal",
            PolicyKind::Suboptimal => "suboptimal",
            PolicyKind::Energy => "energy",
            PolicyKind::Quantizer => "quantizer",
            PolicyKind::Beamforming => "beamforming",
            PolicyKind::BeamformingPerfect => "beamforming-perfect",
            PolicyKind::Centralized => "centralized",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == name)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single number or a list of numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub m0: f64,
    pub m1: f64,
    pub p: f64,
    #[serde(default)]
    pub nu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub sigma_obs_sq: f64,
    #[serde(default = "one")]
    pub gain: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_budget: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyConfig {
    /// Price per unit energy, one value for all sensors or one per sensor.
    pub lambda_energy: OneOrMany,
    /// Amplitude search cap; defaults to `10 max_l sqrt(B_l / sigma_l^2)`.
    #[serde(default)]
    pub alpha_hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    /// Pilot count `K`.
    #[serde(default = "one_u32")]
    pub pilots: u32,
    /// Pilot power per sensor; defaults to each sensor's transmit power.
    #[serde(default)]
    pub pilot_power: Option<Vec<f64>>,
    /// Stages per channel realization; absent keeps one realization per trial.
    #[serde(default)]
    pub block_length: Option<u64>,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self { pilots: 1, pilot_power: None, block_length: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AutoThreshold {
    #[serde(rename = "auto-kl")]
    AutoKl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThresholdSpec {
    Auto(AutoThreshold),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerConfig {
    pub thresholds: ThresholdSpec,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        Self { thresholds: ThresholdSpec::Auto(AutoThreshold::AutoKl) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    /// Policies in the expected order of increasing delay.
    pub policies: Vec<PolicyKind>,
    #[serde(default = "default_pfa_targets")]
    pub pfa_targets: Vec<f64>,
    /// Compare the energy policy against the power-constrained optimum at
    /// matched expected energy, at this false-alarm level.
    #[serde(default)]
    pub energy_match_pfa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub sensors: Vec<SensorConfig>,
    pub mac_sigma_sq: f64,
    #[serde(default = "default_policy")]
    pub policy: PolicyKind,
    pub lambda: OneOrMany,
    #[serde(default)]
    pub energy: Option<EnergyConfig>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_vi_tol")]
    pub vi_tol: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_quad_nodes")]
    pub quad_nodes: usize,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_max_horizon")]
    pub max_horizon: u64,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub quantizer: QuantizerConfig,
    #[serde(default)]
    pub compare: Option<CompareConfig>,
}

fn one() -> f64 {
    1.0
}

fn one_u32() -> u32 {
    1
}

fn default_policy() -> PolicyKind {
    PolicyKind::Optimal
}

fn default_grid_points() -> usize {
    1000
}

fn default_vi_tol() -> f64 {
    1e-4
}

fn default_max_iterations() -> usize {
    100_000
}

fn default_quad_nodes() -> usize {
    phyfusion_core::quadrature::DEFAULT_NODES
}

fn default_trials() -> u64 {
    100_000
}

fn default_seed() -> u64 {
    1
}

fn default_max_horizon() -> u64 {
    phyfusion_core::trial::DEFAULT_MAX_HORIZON
}

pub fn default_pfa_targets() -> Vec<f64> {
    (1..=5).map(|k| (-(k as f64)).exp()).collect()
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, AppError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| AppError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), AppError> {
        self.change_model()?;
        self.network()?;
        let lambdas = self.lambdas();
        if lambdas.is_empty() || lambdas.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(AppError::Config("`lambda` must be one or more positive numbers".into()));
        }
        if self.trials == 0 {
            return Err(AppError::Config("`trials` must be positive".into()));
        }
        if let Some(energy) = &self.energy {
            let n = energy.lambda_energy.values().len();
            if matches!(energy.lambda_energy, OneOrMany::Many(_)) && n != self.sensors.len() {
                return Err(AppError::Config(format!(
                    "`energy.lambda_energy` has {n} entries for {} sensors",
                    self.sensors.len()
                )));
            }
        }
        if let Some(pp) = &self.channel.pilot_power {
            if pp.len() != self.sensors.len() {
                return Err(AppError::Config("`channel.pilot_power` needs one entry per sensor".into()));
            }
        }
        if let ThresholdSpec::Values(t) = &self.quantizer.thresholds {
            if t.len() != self.sensors.len() {
                return Err(AppError::Config("`quantizer.thresholds` needs one entry per sensor".into()));
            }
        }
        if let Some(cmp) = &self.compare {
            if cmp.policies.is_empty() {
                return Err(AppError::Config("`compare.policies` must not be empty".into()));
            }
            if cmp.pfa_targets.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
                return Err(AppError::Config("`compare.pfa_targets` must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.lambda.values()
    }

    pub fn change_model(&self) -> Result<ChangeModel, AppError> {
        let m = &self.model;
        ChangeModel::new(m.m0, m.m1, m.p, m.nu).map_err(|e| AppError::Config(format!("model: {e}")))
    }

    pub fn network(&self) -> Result<NetworkModel, AppError> {
        let sensors = self
            .sensors
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let budget = match (s.power, s.energy_budget) {
                    (Some(p), None) => Budget::Power(p),
                    (None, Some(e)) => Budget::Energy(e),
                    _ => {
                        return Err(AppError::Config(format!(
                            "sensor {i}: give exactly one of `power` and `energy_budget`"
                        )))
                    }
                };
                Ok(Sensor { sigma_obs_sq: s.sigma_obs_sq, gain: s.gain, budget })
            })
            .collect::<Result<Vec<_>, _>>()?;
        NetworkModel::new(sensors, self.mac_sigma_sq).map_err(|e| AppError::Config(format!("network: {e}")))
    }

    pub fn solver_settings(&self) -> SolverSettings {
        SolverSettings { grid_points: self.grid_points, tol: self.vi_tol, max_iterations: self.max_iterations }
    }

    pub fn energy_settings(&self) -> EnergySettings {
        EnergySettings {
            solver: self.solver_settings(),
            alpha_hi: self.energy.as_ref().and_then(|e| e.alpha_hi),
            ..Default::default()
        }
    }

    pub fn energy_weights(&self, lambda_delay: f64) -> Result<EnergyWeights, AppError> {
        let energy = self
            .energy
            .as_ref()
            .ok_or_else(|| AppError::Config("policy `energy` needs an `energy` block".into()))?;
        let lambda_energy = match &energy.lambda_energy {
            OneOrMany::One(v) => vec![*v; self.sensors.len()],
            OneOrMany::Many(v) => v.clone(),
        };
        Ok(EnergyWeights { lambda_energy, lambda_delay })
    }

    pub fn quadrature(&self) -> Result<GaussHermite, AppError> {
        GaussHermite::new(self.quad_nodes).map_err(|e| AppError::Config(e.to_string()))
    }

    /// Canonical JSON of the resolved configuration.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("configuration serializes")
    }
}
