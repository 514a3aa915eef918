//! One-bit quantizer baseline.
//!
//! Each sensor thresholds its own sample, `b_l = 1{x_l > t_l}`, and the bits
//! reach the fusion center without error. The channel is assumed to run at
//! the sum-rate SNR that makes this possible, so the MAC noise plays no part.
//! The stopping level comes from a value function solved over the `2^L`
//! bit patterns.

use alloc::vec::Vec;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::{Feedback, Policy, PolicyState};
use crate::dp::{ObservationKernel, Successor, ValueFunction};
use crate::error::{Error, Result};
use crate::model::{AffineControl, Belief, ChangeModel, NetworkModel};

/// Largest sensor count for which the bit patterns are enumerated.
pub const MAX_SENSORS: usize = 16;

const SEARCH_POINTS: usize = 100_001;
const SEARCH_HALF_WIDTH: f64 = 6.0;

/// Channel SNR needed to carry `L` sensors' `D`-level symbols on the GMAC:
/// `(D^(2L) - 1) / L`.
pub fn required_snr(levels: u32, sensors: u32) -> f64 {
    (libm::pow(levels as f64, 2.0 * sensors as f64) - 1.0) / sensors as f64
}

/// `Pr{N(0, 1) > x}`.
fn normal_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / core::f64::consts::SQRT_2)
}

/// `D(Bern(q1) || Bern(q0))`.
fn bernoulli_kl(q1: f64, q0: f64) -> f64 {
    let term = |a: f64, b: f64| if a <= 0.0 { 0.0 } else { a * libm::log(a / b) };
    term(q1, q0) + term(1.0 - q1, 1.0 - q0)
}

/// Per-sensor thresholds and the bit probabilities they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerDesign {
    pub thresholds: Vec<f64>,
    /// `Pr{b_l = 1 | theta = m0}`.
    pub q0: Vec<f64>,
    /// `Pr{b_l = 1 | theta = m1}`.
    pub q1: Vec<f64>,
}

impl QuantizerDesign {
    pub fn new(model: &ChangeModel, net: &NetworkModel, thresholds: Vec<f64>) -> Result<Self> {
        net.check_len(thresholds.len())?;
        if net.len() > MAX_SENSORS {
            return Err(Error::InvalidParameter { name: "sensors", reason: "quantizer supports at most 16 sensors" });
        }
        if thresholds.iter().any(|t| t.is_nan()) {
            return Err(Error::InvalidParameter { name: "thresholds", reason: "must not be NaN" });
        }
        let tail = |mean: f64| -> Vec<f64> {
            net.sensors()
                .iter()
                .zip(&thresholds)
                .map(|(s, t)| normal_tail((t - mean) / libm::sqrt(s.sigma_obs_sq)))
                .collect()
        };
        let q0 = tail(model.m0());
        let q1 = tail(model.m1());
        Ok(Self { thresholds, q0, q1 })
    }

    /// Thresholds maximizing `D(Bern(q1) || Bern(q0))` sensor by sensor, by
    /// grid search over `[min(m) - 6 sigma, max(m) + 6 sigma]`.
    pub fn kl_optimal(model: &ChangeModel, net: &NetworkModel) -> Result<Self> {
        let lo_mean = model.m0().min(model.m1());
        let hi_mean = model.m0().max(model.m1());
        let thresholds = net
            .sensors()
            .iter()
            .map(|s| {
                let sd = libm::sqrt(s.sigma_obs_sq);
                let lo = lo_mean - SEARCH_HALF_WIDTH * sd;
                let hi = hi_mean + SEARCH_HALF_WIDTH * sd;
                let mut best = (lo, f64::NEG_INFINITY);
                for i in 0..SEARCH_POINTS {
                    let t = lo + (hi - lo) * i as f64 / (SEARCH_POINTS - 1) as f64;
                    let d = bernoulli_kl(normal_tail((t - model.m1()) / sd), normal_tail((t - model.m0()) / sd));
                    if d > best.1 {
                        best = (t, d);
                    }
                }
                best.0
            })
            .collect();
        Self::new(model, net, thresholds)
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    /// `(Pr{bits | m0}, Pr{bits | m1})` for the pattern encoded in `bits`.
    pub fn pattern_likelihoods(&self, bits: u32) -> (f64, f64) {
        let mut p0 = 1.0;
        let mut p1 = 1.0;
        for l in 0..self.len() {
            if bits >> l & 1 == 1 {
                p0 *= self.q0[l];
                p1 *= self.q1[l];
            } else {
                p0 *= 1.0 - self.q0[l];
                p1 *= 1.0 - self.q1[l];
            }
        }
        (p0, p1)
    }

    /// Posterior after observing `bits` from one-step prior `beta`.
    pub fn posterior(&self, bits: u32, beta: f64) -> f64 {
        let (p0, p1) = self.pattern_likelihoods(bits);
        let num = beta * p1;
        let den = num + (1.0 - beta) * p0;
        if den > 0.0 {
            (num / den).clamp(0.0, 1.0)
        } else {
            beta
        }
    }
}

/// Law of the next belief when the bits of a [`QuantizerDesign`] are observed.
#[derive(Debug, Clone)]
pub struct QuantizerKernel {
    model: ChangeModel,
    design: QuantizerDesign,
}

impl QuantizerKernel {
    pub fn new(model: ChangeModel, design: QuantizerDesign) -> Self {
        Self { model, design }
    }
}

impl ObservationKernel for QuantizerKernel {
    fn successors(&self, mu: f64, out: &mut Vec<Successor>) {
        let beta = self.model.prior_update(Belief::clamped(mu));
        for bits in 0..(1u32 << self.design.len()) {
            let (p0, p1) = self.design.pattern_likelihoods(bits);
            let weight = beta * p1 + (1.0 - beta) * p0;
            if weight > 0.0 {
                out.push(Successor { posterior: (beta * p1 / weight).clamp(0.0, 1.0), weight });
            }
        }
    }
}

/// The baseline policy. Its per-stage energy is the full power budget of
/// every sensor, the cost of running the channel at the sum-rate SNR.
#[derive(Debug, Clone)]
pub struct QuantizerPolicy {
    model: ChangeModel,
    net: NetworkModel,
    design: QuantizerDesign,
    mu_star: f64,
}

impl QuantizerPolicy {
    pub fn new(model: ChangeModel, net: NetworkModel, design: QuantizerDesign, vf: &ValueFunction) -> Result<Self> {
        net.check_len(design.len())?;
        Ok(Self { model, net, design, mu_star: vf.mu_star })
    }

    pub fn design(&self) -> &QuantizerDesign {
        &self.design
    }
}

impl Policy for QuantizerPolicy {
    fn name(&self) -> &str {
        "quantizer"
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

    /// Unit amplitude and the threshold as centering, for the trace only.
    fn control(&self, _state: &PolicyState) -> Result<AffineControl> {
        Ok(AffineControl { alpha: alloc::vec![1.0; self.net.len()], c: self.design.thresholds.clone() })
    }

    fn observe(
        &self,
        state: &mut PolicyState,
        control: &AffineControl,
        theta: f64,
        rng: &mut dyn RngCore,
    ) -> Result<()> {
        let mut bits = 0u32;
        for (l, s) in self.net.sensors().iter().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            if theta + libm::sqrt(s.sigma_obs_sq) * z > self.design.thresholds[l] {
                bits |= 1 << l;
            }
        }
        let beta = self.model.prior_update(state.mu);
        let mu = Belief::clamped(self.design.posterior(bits, beta));
        let energy: Vec<f64> = self.net.sensors().iter().map(|s| s.budget.value()).collect();
        state.record(control.clone(), &energy, mu);
        Ok(())
    }
}
