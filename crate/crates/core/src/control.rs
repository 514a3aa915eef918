//! Per-stage power-constrained controls.
//!
//! Centering every sensor at the MMSE estimate of `theta` maximizes the
//! admissible amplitude box `[0, alpha_max_l]`. Over that box the amplitudes
//! minimize the effective variance; the minimizer saturates the sensors with
//! the smallest scaled noise `sigma_l^2 h_l alpha_max_l` and scales the rest
//! in proportion to `1 / (sigma_l^2 h_l)`.
//!
//! The nonconvex variance problem is split in two. For a fixed coupling value
//! `a = sum h_l alpha_l` the inner problem is a separable convex quadratic
//! over a box with one linear equality, solved in closed form by locating `a`
//! among `L` breakpoints ([`inner_solution`]). The outer problem over `a`
//! becomes convex in `b = 1/a`; its minimizer is the unique interval whose
//! parabola vertex falls inside it, or `a_max` when none does
//! ([`solve_alpha`]).

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{AffineControl, ChangeModel, NetworkModel};

/// Absolute slack on both sides of the interval test.
pub const INTERVAL_SLACK: f64 = 1e-12;

/// MMSE centering `c = m1 beta + m0 (1 - beta)`, shared by all sensors.
pub fn optimal_c(beta: f64, model: &ChangeModel) -> f64 {
    model.m1() * beta + model.m0() * (1.0 - beta)
}

/// Amplitude caps and the saturation order of the active sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeCaps {
    /// `alpha_max_l` for every sensor, including zero-gain ones.
    pub alpha_max: Vec<f64>,
    /// Positive-gain sensors sorted by `sigma_l^2 h_l alpha_max_l`, ties by index.
    /// Zero-gain sensors are left out and always get `alpha_l = 0`.
    pub order: Vec<usize>,
}

impl AmplitudeCaps {
    /// Sort key `sigma_l^2 h_l alpha_max_l` of sensor `l`.
    pub fn key(&self, net: &NetworkModel, l: usize) -> f64 {
        let s = net.sensors()[l];
        s.sigma_obs_sq * s.gain * self.alpha_max[l]
    }
}

/// Caps from the power constraint under MMSE centering:
/// `alpha_max_l = sqrt(P_l / (sigma_l^2 + (m1 - m0)^2 beta (1 - beta)))`.
pub fn amplitude_caps(net: &NetworkModel, beta: f64, model: &ChangeModel) -> Result<AmplitudeCaps> {
    let prior_var = model.state_variance(beta);
    let alpha_max = net
        .sensors()
        .iter()
        .enumerate()
        .map(|(l, s)| {
            s.power()
                .map(|p| libm::sqrt(p / (s.sigma_obs_sq + prior_var)))
                .ok_or(Error::MissingPowerBudget { sensor: l })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(caps_from_alpha_max(net, alpha_max))
}

/// Orders an explicit cap vector.
pub fn caps_from_alpha_max(net: &NetworkModel, alpha_max: Vec<f64>) -> AmplitudeCaps {
    let mut order: Vec<usize> = (0..net.len()).filter(|&l| net.sensors()[l].gain > 0.0).collect();
    let keys: Vec<f64> = (0..net.len())
        .map(|l| {
            let s = net.sensors()[l];
            s.sigma_obs_sq * s.gain * alpha_max[l]
        })
        .collect();
    // sort_by is stable, so equal keys keep ascending sensor index.
    order.sort_by(|&i, &j| keys[i].total_cmp(&keys[j]));
    AmplitudeCaps { alpha_max, order }
}

/// Per-sensor quantities along the saturation order.
struct Ordered {
    /// `sigma^2 h alpha_max`
    key: Vec<f64>,
    /// `h alpha_max`
    reach: Vec<f64>,
    /// `(sigma h alpha_max)^2`
    noise: Vec<f64>,
    /// `1 / sigma^2`
    precision: Vec<f64>,
}

impl Ordered {
    fn new(caps: &AmplitudeCaps, net: &NetworkModel) -> Self {
        let n = caps.order.len();
        let mut out = Self {
            key: Vec::with_capacity(n),
            reach: Vec::with_capacity(n),
            noise: Vec::with_capacity(n),
            precision: Vec::with_capacity(n),
        };
        for &l in &caps.order {
            let s = net.sensors()[l];
            let reach = s.gain * caps.alpha_max[l];
            out.key.push(s.sigma_obs_sq * reach);
            out.reach.push(reach);
            out.noise.push(s.sigma_obs_sq * reach * reach);
            out.precision.push(1.0 / s.sigma_obs_sq);
        }
        out
    }

    fn len(&self) -> usize {
        self.key.len()
    }

    /// `sum_{j < k} reach_j`
    fn saturated_reach(&self, k: usize) -> f64 {
        self.reach[..k].iter().sum()
    }

    fn saturated_noise(&self, k: usize) -> f64 {
        self.noise[..k].iter().sum()
    }

    /// `sum_{j >= k} 1 / sigma_j^2`
    fn free_precision(&self, k: usize) -> f64 {
        self.precision[k..].iter().sum()
    }
}

/// Breakpoints `a_0 = 0 <= a_1 <= ... <= a_n = a_max` over the `n` active sensors,
/// `a_k = sum_{j<=k} h_j alpha_max_j + key_k sum_{j>k} sigma_j^{-2}`.
pub fn breakpoints(caps: &AmplitudeCaps, net: &NetworkModel) -> Vec<f64> {
    let ord = Ordered::new(caps, net);
    let n = ord.len();
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    for k in 1..=n {
        out.push(ord.saturated_reach(k) + ord.key[k - 1] * ord.free_precision(k));
    }
    out
}

/// Minimizer of `sum sigma_l^2 h_l^2 alpha_l^2` on the box at fixed coupling `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub alpha: Vec<f64>,
    /// `V(a)`
    pub value: f64,
    pub a: f64,
    /// Number of saturated sensors (the interval index).
    pub saturated: usize,
}

pub fn inner_solution(a: f64, caps: &AmplitudeCaps, net: &NetworkModel) -> Result<InnerSolution> {
    let ord = Ordered::new(caps, net);
    let n = ord.len();
    let a_max = ord.saturated_reach(n);
    if !(a >= 0.0) || a > a_max * (1.0 + 1e-12) {
        return Err(Error::CouplingOutOfRange { a, a_max });
    }
    let mut alpha = alloc::vec![0.0; net.len()];
    if a >= a_max {
        for &l in &caps.order {
            alpha[l] = caps.alpha_max[l];
        }
        return Ok(InnerSolution { alpha, value: ord.saturated_noise(n), a: a_max, saturated: n });
    }
    let bps = breakpoints(caps, net);
    // Smallest k with a <= a_{k+1}.
    let k = (0..n).find(|&k| a <= bps[k + 1]).unwrap_or(n - 1);
    let base = ord.saturated_reach(k);
    let free = ord.free_precision(k);
    let excess = (a - base).max(0.0);
    for (j, &l) in caps.order.iter().enumerate() {
        alpha[l] = if j < k {
            caps.alpha_max[l]
        } else {
            let s = net.sensors()[l];
            (excess / (s.sigma_obs_sq * s.gain * free)).min(caps.alpha_max[l])
        };
    }
    let value = ord.saturated_noise(k) + excess * excess / free;
    Ok(InnerSolution { alpha, value, a, saturated: k })
}

/// Output of the amplitude algorithm with its certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSolution {
    pub alpha: Vec<f64>,
    /// Number of saturated sensors `k`; equals the active count in the fallback branch.
    pub saturated: usize,
    /// Optimal coupling `a* = sum h_l alpha_l`.
    pub a_star: f64,
}

/// Step 1: the first `k` in `1..n` whose outer-parabola vertex lies in `[a_k, a_{k+1}]`.
fn find_interval(ord: &Ordered, mac_sigma_sq: f64, from: usize) -> Option<usize> {
    let n = ord.len();
    (from.max(1)..n).find(|&k| {
        let ratio = (ord.saturated_noise(k) + mac_sigma_sq) / ord.saturated_reach(k);
        ord.key[k - 1] <= ratio + INTERVAL_SLACK && ratio <= ord.key[k] + INTERVAL_SLACK
    })
}

fn assemble(ord: &Ordered, caps: &AmplitudeCaps, net: &NetworkModel, k: usize) -> AlphaSolution {
    let n = ord.len();
    let mut alpha = alloc::vec![0.0; net.len()];
    if k >= n {
        for &l in &caps.order {
            alpha[l] = caps.alpha_max[l];
        }
        return AlphaSolution { alpha, saturated: n, a_star: ord.saturated_reach(n) };
    }
    let base = ord.saturated_reach(k);
    let free = ord.free_precision(k);
    let a_star = base + free / base * (ord.saturated_noise(k) + net.mac_sigma_sq());
    for (j, &l) in caps.order.iter().enumerate() {
        alpha[l] = if j < k {
            caps.alpha_max[l]
        } else {
            let s = net.sensors()[l];
            (a_star - base) / (s.sigma_obs_sq * s.gain * free)
        };
    }
    AlphaSolution { alpha, saturated: k, a_star }
}

/// Global minimizer of the effective variance over `prod_l [0, alpha_max_l]`.
pub fn solve_alpha(caps: &AmplitudeCaps, net: &NetworkModel) -> AlphaSolution {
    let ord = Ordered::new(caps, net);
    let k = find_interval(&ord, net.mac_sigma_sq(), 1).unwrap_or(ord.len());
    let solution = assemble(&ord, caps, net, k);

    #[cfg(debug_assertions)]
    if k < ord.len() {
        // The vertex condition should single out one interval; a second hit
        // can only come from ties and must give the same variance.
        if let Some(other) = find_interval(&ord, net.mac_sigma_sq(), k + 1) {
            let v1 = net.effective_variance(&solution.alpha);
            let v2 = net.effective_variance(&assemble(&ord, caps, net, other).alpha);
            if let (Ok(v1), Ok(v2)) = (v1, v2) {
                debug_assert!(
                    (v1 - v2).abs() <= 1e-9 * v1.abs().max(1e-300),
                    "intervals {k} and {other} both qualify with variances {v1} and {v2}"
                );
            }
        }
    }
    solution
}

pub fn optimal_alpha(caps: &AmplitudeCaps, net: &NetworkModel) -> Vec<f64> {
    solve_alpha(caps, net).alpha
}

/// Full optimal control `(alpha, c)` for one-step prior `beta`.
pub fn optimal_control(beta: f64, model: &ChangeModel, net: &NetworkModel) -> Result<AffineControl> {
    let caps = amplitude_caps(net, beta, model)?;
    let alpha = optimal_alpha(&caps, net);
    Ok(AffineControl::common_centering(alpha, optimal_c(beta, model)))
}

/// Minimized effective variance for one-step prior `beta`.
pub fn optimal_variance(beta: f64, model: &ChangeModel, net: &NetworkModel) -> Result<f64> {
    let caps = amplitude_caps(net, beta, model)?;
    net.effective_variance(&optimal_alpha(&caps, net))
}
