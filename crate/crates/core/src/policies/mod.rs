//! Fusion-center policies.
//!
//! A policy owns everything that happens between two stopping decisions:
//! which control is fed back to the sensors, how the sensors' transmissions
//! reach the fusion center, and how the belief is updated. The trial loop in
//! [`crate::trial`] only supplies the hidden state `theta` and randomness.

pub mod beamforming;
pub mod quantizer;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use crate::control::{optimal_c, optimal_control};
use crate::dp::ValueFunction;
use crate::error::{Error, Result};
use crate::model::{AffineControl, Belief, ChangeModel, NetworkModel};

pub use beamforming::{mmse_channel_estimate, BeamformingPolicy, ChannelEstimation, EstimatedChannel};
pub use quantizer::{required_snr, QuantizerDesign, QuantizerKernel, QuantizerPolicy};

/// Per-trial state of a running policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    pub mu: Belief,
    /// Number of samples taken so far.
    pub k: u64,
    pub stopped: bool,
    pub last_control: Option<AffineControl>,
    /// Expected energy spent by each sensor so far.
    pub energy_spent: Vec<f64>,
    /// Channel realization and its estimate (beamforming only).
    pub channel: Option<EstimatedChannel>,
}

impl PolicyState {
    pub fn new(prior: f64, sensors: usize) -> Self {
        Self {
            mu: Belief::clamped(prior),
            k: 0,
            stopped: false,
            last_control: None,
            energy_spent: vec![0.0; sensors],
            channel: None,
        }
    }

    fn record(&mut self, control: AffineControl, energy: &[f64], mu: Belief) {
        for (spent, e) in self.energy_spent.iter_mut().zip(energy) {
            *spent += e;
        }
        self.mu = mu;
        self.k += 1;
        self.last_control = Some(control);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Stop,
    Continue(AffineControl),
}

/// Content of the feedback message broadcast to the sensors at one stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feedback {
    /// The stop/continue bit alone.
    Bit,
    /// The stop/continue bit plus the control pair for the next sample.
    ControlAndBit,
}

impl Feedback {
    pub fn carries_control(self) -> bool {
        matches!(self, Feedback::ControlAndBit)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: Action,
    pub feedback: Feedback,
}

impl Decision {
    pub fn is_stop(&self) -> bool {
        matches!(self.action, Action::Stop)
    }
}

pub trait Policy: Send + Sync {
    fn name(&self) -> &str;

    fn model(&self) -> &ChangeModel;

    fn sensors(&self) -> usize;

    /// Stopping level on the belief.
    fn mu_star(&self) -> f64;

    fn feedback(&self) -> Feedback;

    /// Control for the next sample from the current state.
    fn control(&self, state: &PolicyState) -> Result<AffineControl>;

    /// Takes one sample under `control` with hidden state `theta` and
    /// updates the belief, stage counter and energy.
    fn observe(
        &self,
        state: &mut PolicyState,
        control: &AffineControl,
        theta: f64,
        rng: &mut dyn RngCore,
    ) -> Result<()>;

    /// Fresh state at stage 0; may draw per-trial randomness.
    fn begin(&self, _rng: &mut dyn RngCore) -> PolicyState {
        PolicyState::new(self.model().prior(), self.sensors())
    }

    fn decide(&self, state: &PolicyState) -> Result<Decision> {
        let action = if state.stopped || state.mu.value() >= self.mu_star() {
            Action::Stop
        } else {
            Action::Continue(self.control(state)?)
        };
        Ok(Decision { action, feedback: self.feedback() })
    }
}

/// Senses through the real-valued GMAC and updates the belief. A silent
/// control leaves the belief at its one-step prior.
fn gaussian_observe(
    model: &ChangeModel,
    net: &NetworkModel,
    state: &mut PolicyState,
    control: &AffineControl,
    theta: f64,
    rng: &mut dyn RngCore,
) -> Result<()> {
    let beta = model.prior_update(state.mu);
    let energy = net.stage_energy(model, beta, control);
    let mu = match net.sense(control, theta, rng) {
        Some(y_hat) => {
            let sigma_sq = net.effective_variance(&control.alpha)?;
            model.posterior_update(y_hat, state.mu, sigma_sq)?
        }
        None => Belief::clamped(beta),
    };
    state.record(control.clone(), &energy, mu);
    Ok(())
}

// ---------------------------------------------------------------------------
// Optimal power-constrained policy
// ---------------------------------------------------------------------------

/// Full feedback: the fusion center sends `(alpha, c)` computed from its
/// posterior at every stage.
#[derive(Debug, Clone)]
pub struct OptimalPolicy {
    name: String,
    model: ChangeModel,
    net: NetworkModel,
    mu_star: f64,
}

impl OptimalPolicy {
    pub fn new(model: ChangeModel, net: NetworkModel, vf: &ValueFunction) -> Result<Self> {
        Self::labelled("optimal", model, net, vf)
    }

    /// Same policy under a different name (e.g. the centralized reference).
    pub fn labelled(name: &str, model: ChangeModel, net: NetworkModel, vf: &ValueFunction) -> Result<Self> {
        if let Some(l) = net.sensors().iter().position(|s| s.power().is_none()) {
            return Err(Error::MissingPowerBudget { sensor: l });
        }
        Ok(Self { name: name.into(), model, net, mu_star: vf.mu_star })
    }

    pub fn network(&self) -> &NetworkModel {
        &self.net
    }
}

impl Policy for OptimalPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn model(&self) -> &ChangeModel {
        &self.model
    }

    fn sensors(&self) -> usize {
        self.net.len()
    }

    fn mu_star(&self) -> f64 {
        self.mu_star
    }

    fn feedback(&self) -> Feedback {
        Feedback::ControlAndBit
    }

    fn control(&self, state: &PolicyState) -> Result<AffineControl> {
        optimal_control(self.model.prior_update(state.mu), &self.model, &self.net)
    }

    fn observe(
        &self,
        state: &mut PolicyState,
        control: &AffineControl,
        theta: f64,
        rng: &mut dyn RngCore,
    ) -> Result<()> {
        gaussian_observe(&self.model, &self.net, state, control, theta, rng)
    }
}

// ---------------------------------------------------------------------------
// Reduced-feedback policy
// ---------------------------------------------------------------------------

/// One feedback bit per stage. The controls follow the prior-only schedule
/// `beta_k = 1 - (1 - nu)(1 - p)^(k + 1)` that every sensor can compute
/// offline; the fusion center still stops on its full posterior.
#[derive(Debug, Clone)]
pub struct SuboptimalPolicy {
    model: ChangeModel,
    net: NetworkModel,
    mu_star: f64,
}

impl SuboptimalPolicy {
    pub fn new(model: ChangeModel, net: NetworkModel, vf: &ValueFunction) -> Result<Self> {
        if let Some(l) = net.sensors().iter().position(|s| s.power().is_none()) {
            return Err(Error::MissingPowerBudget { sensor: l });
        }
        Ok(Self { model, net, mu_star: vf.mu_star })
    }
}

/// Prior-only belief that the change has happened by sample `k + 1`.
pub fn prior_schedule(model: &ChangeModel, k: u64) -> f64 {
    let survive = libm::pow(1.0 - model.hazard(), (k + 1) as f64);
    1.0 - (1.0 - model.prior()) * survive
}

impl Policy for SuboptimalPolicy {
    fn name(&self) -> &str {
        "suboptimal"
    }

    fn model(&self) -> &ChangeModel {
        &self.model
    }

    fn sensors(&self) -> usize {
        self.net.len()
    }

    fn mu_star(&self) -> f64 {
        self.mu_star
    }

    fn feedback(&self) -> Feedback {
        Feedback::Bit
    }

    fn control(&self, state: &PolicyState) -> Result<AffineControl> {
        optimal_control(prior_schedule(&self.model, state.k), &self.model, &self.net)
    }

    fn observe(
        &self,
        state: &mut PolicyState,
        control: &AffineControl,
        theta: f64,
        rng: &mut dyn RngCore,
    ) -> Result<()> {
        gaussian_observe(&self.model, &self.net, state, control, theta, rng)
    }
}

// ---------------------------------------------------------------------------
// Energy-priced policy
// ---------------------------------------------------------------------------

/// Amplitudes looked up in the control table of an energy-mode value
/// function; MMSE centering.
#[derive(Debug, Clone)]
pub struct EnergyPolicy {
    model: ChangeModel,
    net: NetworkModel,
    vf: ValueFunction,
}

impl EnergyPolicy {
    pub fn new(model: ChangeModel, net: NetworkModel, vf: ValueFunction) -> Result<Self> {
        match &vf.controls {
            Some(table) if table.first().map(Vec::len) == Some(net.len()) => Ok(Self { model, net, vf }),
            Some(table) => Err(Error::DimensionMismatch {
                expected: net.len(),
                got: table.first().map(Vec::len).unwrap_or(0),
            }),
            None => Err(Error::InvalidParameter {
                name: "value_function",
                reason: "energy policy needs a control table",
            }),
        }
    }

    pub fn value_function(&self) -> &ValueFunction {
        &self.vf
    }
}

impl Policy for EnergyPolicy {
    fn name(&self) -> &str {
        "energy"
    }

    fn model(&self) -> &ChangeModel {
        &self.model
    }

    fn sensors(&self) -> usize {
        self.net.len()
    }

    fn mu_star(&self) -> f64 {
        self.vf.mu_star
    }

    fn feedback(&self) -> Feedback {
        Feedback::ControlAndBit
    }

    fn control(&self, state: &PolicyState) -> Result<AffineControl> {
        let alpha = self.vf.controls_at(state.mu.value()).expect("checked at construction");
        let c = optimal_c(self.model.prior_update(state.mu), &self.model);
        Ok(AffineControl::common_centering(alpha, c))
    }

    fn observe(
        &self,
        state: &mut PolicyState,
        control: &AffineControl,
        theta: f64,
        rng: &mut dyn RngCore,
    ) -> Result<()> {
        gaussian_observe(&self.model, &self.net, state, control, theta, rng)
    }
}
