//! Transmit beamforming over fading channels with pilot-based estimates.
//!
//! Gains are complex, `h_l ~ CN(0, g_l^2)`, and constant over a block of
//! stages. The fusion center estimates them from `K` pilots at power
//! `P_pilot` and feeds the phases back; each sensor pre-rotates its
//! transmission by `conj(h_hat_l) / |h_hat_l|` and the fusion center keeps the
//! real part of the received sum. Amplitudes come from the power-constrained
//! optimum computed with `|h_hat_l|` as gains and half the MAC noise, which
//! is what lands in the real part.

use alloc::vec::Vec;

use num_complex::Complex64;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::{Feedback, Policy, PolicyState};
use crate::control::optimal_control;
use crate::dp::ValueFunction;
use crate::error::{Error, Result};
use crate::model::{AffineControl, Belief, ChangeModel, NetworkModel};

/// A channel realization and the fusion center's estimate of it.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedChannel {
    pub h_true: Vec<Complex64>,
    pub h_hat: Vec<Complex64>,
    pub pilots: u32,
    pub pilot_power: Vec<f64>,
}

impl EstimatedChannel {
    /// Estimated gain magnitudes `|h_hat_l|`.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.h_hat.iter().map(|h| h.norm()).collect()
    }
}

fn complex_normal(rng: &mut dyn RngCore) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * core::f64::consts::FRAC_1_SQRT_2
}

/// Draws `h_l ~ CN(0, g_l^2)` and its MMSE estimate from `K` pilots:
/// with `r_l = sigma_mac / sqrt(K P_pilot_l)` and `Z ~ CN(0, 1)`,
/// `h_hat_l = g_l^2 (h_l + r_l Z) / (g_l^2 + r_l^2)`. For unit `g_l` this
/// is `(h_l + r_l Z) / (1 + r_l^2)`.
pub fn mmse_channel_estimate(
    gains: &[f64],
    mac_sigma_sq: f64,
    pilots: u32,
    pilot_power: &[f64],
    rng: &mut dyn RngCore,
) -> Result<EstimatedChannel> {
    if pilots == 0 {
        return Err(Error::InvalidParameter { name: "pilots", reason: "need at least one pilot" });
    }
    if pilot_power.len() != gains.len() {
        return Err(Error::DimensionMismatch { expected: gains.len(), got: pilot_power.len() });
    }
    if pilot_power.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::InvalidParameter { name: "pilot_power", reason: "must be positive" });
    }
    let sigma_mac = libm::sqrt(mac_sigma_sq);
    let mut h_true = Vec::with_capacity(gains.len());
    let mut h_hat = Vec::with_capacity(gains.len());
    for (g, p) in gains.iter().zip(pilot_power) {
        let h = complex_normal(rng) * *g;
        let z = complex_normal(rng);
        let r = sigma_mac / libm::sqrt(pilots as f64 * p);
        let g2 = g * g;
        let shrink = if g2 + r * r > 0.0 { g2 / (g2 + r * r) } else { 0.0 };
        h_true.push(h);
        h_hat.push((h + z * r) * shrink);
    }
    Ok(EstimatedChannel { h_true, h_hat, pilots, pilot_power: pilot_power.to_vec() })
}

/// How the fusion center learns the channel.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelEstimation {
    /// The fusion center knows `h` exactly.
    Perfect,
    Pilots { count: u32, power: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct BeamformingPolicy {
    name: &'static str,
    model: ChangeModel,
    /// Configured gain magnitudes `g_l` and the complex MAC noise variance.
    net: NetworkModel,
    estimation: ChannelEstimation,
    /// Stages per channel realization; `None` keeps one realization per trial.
    block_length: Option<u64>,
    mu_star: f64,
}

impl BeamformingPolicy {
    pub fn new(
        model: ChangeModel,
        net: NetworkModel,
        estimation: ChannelEstimation,
        block_length: Option<u64>,
        vf: &ValueFunction,
    ) -> Result<Self> {
        if let Some(l) = net.sensors().iter().position(|s| s.power().is_none()) {
            return Err(Error::MissingPowerBudget { sensor: l });
        }
        if let ChannelEstimation::Pilots { count, power } = &estimation {
            if *count == 0 {
                return Err(Error::InvalidParameter { name: "pilots", reason: "need at least one pilot" });
            }
            net.check_len(power.len())?;
        }
        if block_length == Some(0) {
            return Err(Error::InvalidParameter { name: "block_length", reason: "must be positive" });
        }
        let name = match estimation {
            ChannelEstimation::Perfect => "beamforming-perfect",
            ChannelEstimation::Pilots { .. } => "beamforming",
        };
        Ok(Self { name, model, net, estimation, block_length, mu_star: vf.mu_star })
    }

    /// Network the nominal value function is solved on: configured gain
    /// magnitudes and half the MAC noise.
    pub fn nominal_network(net: &NetworkModel) -> Result<NetworkModel> {
        net.with_mac_sigma_sq(net.mac_sigma_sq() / 2.0)
    }

    fn draw_channel(&self, rng: &mut dyn RngCore) -> EstimatedChannel {
        let gains: Vec<f64> = self.net.sensors().iter().map(|s| s.gain).collect();
        match &self.estimation {
            ChannelEstimation::Perfect => {
                let h: Vec<Complex64> = gains.iter().map(|g| complex_normal(rng) * *g).collect();
                EstimatedChannel { h_hat: h.clone(), h_true: h, pilots: 0, pilot_power: Vec::new() }
            }
            ChannelEstimation::Pilots { count, power } => {
                mmse_channel_estimate(&gains, self.net.mac_sigma_sq(), *count, power, rng)
                    .expect("validated at construction")
            }
        }
    }

    /// Network as seen by the fusion center for the current estimate.
    fn estimated_network(&self, channel: &EstimatedChannel) -> Result<NetworkModel> {
        self.net
            .with_gains(&channel.magnitudes())?
            .with_mac_sigma_sq(self.net.mac_sigma_sq() / 2.0)
    }
}

impl Policy for BeamformingPolicy {
    fn name(&self) -> &str {
        self.name
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

    fn begin(&self, rng: &mut dyn RngCore) -> PolicyState {
        let mut state = PolicyState::new(self.model.prior(), self.net.len());
        state.channel = Some(self.draw_channel(rng));
        state
    }

    fn control(&self, state: &PolicyState) -> Result<AffineControl> {
        let channel = state.channel.as_ref().expect("channel drawn in begin");
        let est = self.estimated_network(channel)?;
        optimal_control(self.model.prior_update(state.mu), &self.model, &est)
    }

    fn observe(
        &self,
        state: &mut PolicyState,
        control: &AffineControl,
        theta: f64,
        rng: &mut dyn RngCore,
    ) -> Result<()> {
        let channel = state.channel.as_ref().expect("channel drawn in begin");
        let est = self.estimated_network(channel)?;
        let mut received = Complex64::new(0.0, 0.0);
        for (l, s) in self.net.sensors().iter().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            let x = theta + libm::sqrt(s.sigma_obs_sq) * z;
            let h_hat = channel.h_hat[l];
            let magnitude = h_hat.norm();
            if magnitude > 0.0 {
                let rotation = h_hat.conj() / magnitude;
                received += channel.h_true[l] * rotation * (control.alpha[l] * (x - control.c[l]));
            }
        }
        received += complex_normal(rng) * libm::sqrt(self.net.mac_sigma_sq());

        let beta = self.model.prior_update(state.mu);
        let energy = self.net.stage_energy(&self.model, beta, control);
        let mu = match est.fuse_received(received.re, control) {
            Ok(y_hat) => {
                let sigma_sq = est.effective_variance(&control.alpha)?;
                self.model.posterior_update(y_hat, state.mu, sigma_sq)?
            }
            Err(Error::DegenerateControl) => Belief::clamped(beta),
            Err(e) => return Err(e),
        };
        state.record(control.clone(), &energy, mu);
        if let Some(t) = self.block_length {
            if state.k.is_multiple_of(t) {
                state.channel = Some(self.draw_channel(rng));
            }
        }
        Ok(())
    }
}
