//! The stochastic environment and the fusion-center arithmetic.
//!
//! The hidden state `theta_k` equals `m0` before the change time `Gamma` and
//! `m1` from `Gamma` on. Sensors observe `theta_k` in Gaussian noise, apply an
//! affine map `alpha_l (x - c_l)` and transmit simultaneously over a Gaussian
//! multiple-access channel. The fusion center inverts the superposition into a
//! single statistic `y_hat = theta_k + noise` whose variance depends on the
//! amplitudes, then updates its posterior probability of change.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Log-likelihood ratios are clamped to this magnitude before exponentiation.
const LLR_CLAMP: f64 = 700.0;

/// Change time sentinel for a change that never happens (`p = 0`).
pub const NEVER: u64 = u64::MAX;

// ---------------------------------------------------------------------------
// Change process
// ---------------------------------------------------------------------------

/// Pre/post-change means, per-step hazard and prior mass at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChangeModel {
    m0: f64,
    m1: f64,
    p: f64,
    nu: f64,
}

impl ChangeModel {
    pub fn new(m0: f64, m1: f64, p: f64, nu: f64) -> Result<Self> {
        if !m0.is_finite() {
            return Err(Error::InvalidParameter { name: "m0", reason: "must be finite" });
        }
        if !m1.is_finite() {
            return Err(Error::InvalidParameter { name: "m1", reason: "must be finite" });
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter { name: "p", reason: "must lie in [0, 1]" });
        }
        if !(0.0..=1.0).contains(&nu) {
            return Err(Error::InvalidParameter { name: "nu", reason: "must lie in [0, 1]" });
        }
        Ok(Self { m0, m1, p, nu })
    }

    pub fn m0(&self) -> f64 {
        self.m0
    }

    pub fn m1(&self) -> f64 {
        self.m1
    }

    pub fn hazard(&self) -> f64 {
        self.p
    }

    pub fn prior(&self) -> f64 {
        self.nu
    }

    /// Squared separation `(m1 - m0)^2`.
    pub fn separation_sq(&self) -> f64 {
        let d = self.m1 - self.m0;
        d * d
    }

    /// Mean level at a stage given the change time.
    pub fn theta(&self, stage: u64, change_time: u64) -> f64 {
        if stage >= change_time {
            self.m1
        } else {
            self.m0
        }
    }

    /// Draws the change time.
    ///
    /// `Gamma = 0` with probability `nu`; otherwise
    /// `Pr{Gamma = k} = (1 - nu) p (1 - p)^(k - 1)` for `k >= 1`. Returns
    /// [`NEVER`] when `p = 0` and the prior mass at zero was not hit.
    pub fn sample_change_time<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if self.nu >= 1.0 || rng.random::<f64>() < self.nu {
            return 0;
        }
        if self.p >= 1.0 {
            return 1;
        }
        if self.p <= 0.0 {
            return NEVER;
        }
        // Inversion on (0, 1]: the number of failures before the first success.
        let u = 1.0 - rng.random::<f64>();
        let failures = libm::floor(libm::log(u) / libm::log1p(-self.p));
        if failures >= (NEVER - 1) as f64 {
            NEVER - 1
        } else {
            1 + failures as u64
        }
    }

    /// `beta = Pr{Gamma <= k + 1 | I_k} = mu + (1 - mu) p`.
    pub fn prior_update(&self, mu: Belief) -> f64 {
        let mu = mu.value();
        (mu + (1.0 - mu) * self.p).clamp(0.0, 1.0)
    }

    /// Posterior probability of change after observing `y_hat` with noise
    /// variance `sigma_sq`, starting from belief `mu`.
    pub fn posterior_update(&self, y_hat: f64, mu: Belief, sigma_sq: f64) -> Result<Belief> {
        if !y_hat.is_finite() {
            return Err(Error::NonFiniteObservation);
        }
        if !(sigma_sq > 0.0) {
            return Err(Error::InvalidParameter {
                name: "sigma_sq",
                reason: "must be positive",
            });
        }
        let beta = self.prior_update(mu);
        Ok(Belief::clamped(self.posterior_from_prior(y_hat, beta, sigma_sq)))
    }

    /// Bayes step from the one-step prior `beta`, without input validation.
    ///
    /// Evaluated as `beta / (beta + (1 - beta) exp(llr))` with
    /// `llr = log f0(y) - log f1(y)`.
    #[inline]
    pub fn posterior_from_prior(&self, y_hat: f64, beta: f64, sigma_sq: f64) -> f64 {
        if beta >= 1.0 {
            return 1.0;
        }
        if beta <= 0.0 {
            return 0.0;
        }
        let d0 = y_hat - self.m0;
        let d1 = y_hat - self.m1;
        let llr = ((d1 * d1 - d0 * d0) / (2.0 * sigma_sq)).clamp(-LLR_CLAMP, LLR_CLAMP);
        let post = beta / (beta + (1.0 - beta) * libm::exp(llr));
        post.clamp(0.0, 1.0)
    }

    /// `Var(theta | beta) = (m1 - m0)^2 beta (1 - beta)`.
    pub fn state_variance(&self, beta: f64) -> f64 {
        self.separation_sq() * beta * (1.0 - beta)
    }
}

/// Posterior probability that the change has occurred.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Belief(f64);

impl Belief {
    pub fn new(mu: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&mu) {
            Ok(Self(mu))
        } else {
            Err(Error::InvalidParameter { name: "mu", reason: "must lie in [0, 1]" })
        }
    }

    /// Clamps into `[0, 1]`; NaN maps to 0.
    pub fn clamped(mu: f64) -> Self {
        if mu.is_nan() {
            Self(0.0)
        } else {
            Self(mu.clamp(0.0, 1.0))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

// ---------------------------------------------------------------------------
// Sensors and channel
// ---------------------------------------------------------------------------

/// Per-sensor resource budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    /// Average power per sample, `P_l`.
    Power(f64),
    /// Expected total energy over a detection run, `E_l`.
    Energy(f64),
}

impl Budget {
    pub fn value(self) -> f64 {
        match self {
            Budget::Power(v) | Budget::Energy(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensor {
    pub sigma_obs_sq: f64,
    pub gain: f64,
    pub budget: Budget,
}

impl Sensor {
    pub fn with_power(sigma_obs_sq: f64, gain: f64, power: f64) -> Self {
        Self { sigma_obs_sq, gain, budget: Budget::Power(power) }
    }

    pub fn power(&self) -> Option<f64> {
        match self.budget {
            Budget::Power(p) => Some(p),
            Budget::Energy(_) => None,
        }
    }
}

/// Sensors plus the MAC noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    sensors: Vec<Sensor>,
    mac_sigma_sq: f64,
}

impl NetworkModel {
    pub fn new(sensors: Vec<Sensor>, mac_sigma_sq: f64) -> Result<Self> {
        if sensors.is_empty() {
            return Err(Error::InvalidParameter { name: "sensors", reason: "need at least one sensor" });
        }
        if !(mac_sigma_sq >= 0.0) || !mac_sigma_sq.is_finite() {
            return Err(Error::InvalidParameter {
                name: "mac_sigma_sq",
                reason: "must be finite and nonnegative",
            });
        }
        for s in &sensors {
            if !(s.sigma_obs_sq > 0.0) || !s.sigma_obs_sq.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "sigma_obs_sq",
                    reason: "must be finite and positive",
                });
            }
            if !(s.gain >= 0.0) || !s.gain.is_finite() {
                return Err(Error::InvalidParameter { name: "gain", reason: "must be finite and nonnegative" });
            }
            if !(s.budget.value() > 0.0) || !s.budget.value().is_finite() {
                return Err(Error::InvalidParameter { name: "budget", reason: "must be finite and positive" });
            }
        }
        if sensors.iter().all(|s| s.gain == 0.0) {
            return Err(Error::InvalidParameter { name: "gain", reason: "at least one gain must be positive" });
        }
        Ok(Self { sensors, mac_sigma_sq })
    }

    /// `count` identical sensors.
    pub fn symmetric(count: usize, sensor: Sensor, mac_sigma_sq: f64) -> Result<Self> {
        Self::new(alloc::vec![sensor; count], mac_sigma_sq)
    }

    pub fn sensors(&self) -> &[Sensor] {
        &self.sensors
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    pub fn mac_sigma_sq(&self) -> f64 {
        self.mac_sigma_sq
    }

    /// Same sensors over a different MAC noise level.
    pub fn with_mac_sigma_sq(&self, mac_sigma_sq: f64) -> Result<Self> {
        Self::new(self.sensors.clone(), mac_sigma_sq)
    }

    /// Same network with every budget replaced by a power budget `power`.
    pub fn with_uniform_power(&self, power: f64) -> Result<Self> {
        let sensors = self
            .sensors
            .iter()
            .map(|s| Sensor { budget: Budget::Power(power), ..*s })
            .collect();
        Self::new(sensors, self.mac_sigma_sq)
    }

    /// Same network with the channel gains replaced.
    pub fn with_gains(&self, gains: &[f64]) -> Result<Self> {
        self.check_len(gains.len())?;
        let sensors = self
            .sensors
            .iter()
            .zip(gains)
            .map(|(s, &gain)| Sensor { gain, ..*s })
            .collect();
        Self::new(sensors, self.mac_sigma_sq)
    }

    /// True when all sensors share variance, gain and budget.
    pub fn is_symmetric(&self) -> bool {
        let first = self.sensors[0];
        self.sensors.iter().all(|s| *s == first)
    }

    pub(crate) fn check_len(&self, got: usize) -> Result<()> {
        if got == self.len() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.len(), got })
        }
    }

    /// `sum_l h_l alpha_l`.
    pub fn coupling(&self, alpha: &[f64]) -> f64 {
        self.sensors.iter().zip(alpha).map(|(s, a)| s.gain * a).sum()
    }

    /// Variance of the equivalent observation noise at the fusion center:
    /// `(sum_l (sigma_l h_l alpha_l)^2 + sigma_mac^2) / (sum_l h_l alpha_l)^2`.
    pub fn effective_variance(&self, alpha: &[f64]) -> Result<f64> {
        self.check_len(alpha.len())?;
        let a = self.coupling(alpha);
        if !(a > 0.0) {
            return Err(Error::DegenerateControl);
        }
        let noise: f64 = self
            .sensors
            .iter()
            .zip(alpha)
            .map(|(s, &al)| {
                let u = s.gain * al;
                s.sigma_obs_sq * u * u
            })
            .sum();
        Ok((noise + self.mac_sigma_sq) / (a * a))
    }

    /// Inverts the superposition: `(y_tilde + sum h_l alpha_l c_l) / sum h_l alpha_l`.
    pub fn fuse_received(&self, y_tilde: f64, control: &AffineControl) -> Result<f64> {
        self.check_len(control.alpha.len())?;
        let a = self.coupling(&control.alpha);
        if !(a > 0.0) {
            return Err(Error::DegenerateControl);
        }
        let offset: f64 = self
            .sensors
            .iter()
            .zip(control.alpha.iter().zip(&control.c))
            .map(|(s, (al, c))| s.gain * al * c)
            .sum();
        Ok((y_tilde + offset) / a)
    }

    /// Channel output `sum_l h_l alpha_l (x_l - c_l) + mac_noise`.
    pub fn superpose(&self, observations: &[f64], control: &AffineControl, mac_noise: f64) -> f64 {
        let sent: f64 = self
            .sensors
            .iter()
            .zip(observations)
            .zip(control.alpha.iter().zip(&control.c))
            .map(|((s, x), (al, c))| s.gain * al * (x - c))
            .sum();
        sent + mac_noise
    }

    /// Draws one stage of sensor observations around `theta`, transmits them
    /// and returns the fused statistic, or `None` when the control is silent.
    pub fn sense<R: Rng + ?Sized>(
        &self,
        control: &AffineControl,
        theta: f64,
        rng: &mut R,
    ) -> Option<f64> {
        let observations: Vec<f64> = self
            .sensors
            .iter()
            .map(|s| theta + libm::sqrt(s.sigma_obs_sq) * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mac_noise = libm::sqrt(self.mac_sigma_sq) * rng.sample::<f64, _>(StandardNormal);
        let y_tilde = self.superpose(&observations, control, mac_noise);
        self.fuse_received(y_tilde, control).ok()
    }

    /// Expected per-stage energy `alpha_l^2 E[(X_l - c_l)^2 | beta]` of each sensor.
    pub fn stage_energy(&self, model: &ChangeModel, beta: f64, control: &AffineControl) -> Vec<f64> {
        self.sensors
            .iter()
            .zip(control.alpha.iter().zip(&control.c))
            .map(|(s, (al, c))| {
                let e0 = model.m0 - c;
                let e1 = model.m1 - c;
                al * al * (s.sigma_obs_sq + beta * e1 * e1 + (1.0 - beta) * e0 * e0)
            })
            .collect()
    }
}

/// Per-sensor amplitudes `alpha_l >= 0` and centering `c_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineControl {
    pub alpha: Vec<f64>,
    pub c: Vec<f64>,
}

impl AffineControl {
    pub fn new(alpha: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if alpha.len() != c.len() {
            return Err(Error::DimensionMismatch { expected: alpha.len(), got: c.len() });
        }
        if alpha.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::InvalidParameter { name: "alpha", reason: "must be finite and nonnegative" });
        }
        Ok(Self { alpha, c })
    }

    /// Same centering `c` at every sensor.
    pub fn common_centering(alpha: Vec<f64>, c: f64) -> Self {
        let n = alpha.len();
        Self { alpha, c: alloc::vec![c; n] }
    }

    /// Mean of `alpha_l^2` across sensors.
    pub fn mean_alpha_sq(&self) -> f64 {
        if self.alpha.is_empty() {
            return 0.0;
        }
        self.alpha.iter().map(|a| a * a).sum::<f64>() / self.alpha.len() as f64
    }
}
