//! Bellman operator with a per-sample energy price instead of a power cap.
//!
//! Every continue stage pays `sum_l lambda_l alpha_l^2 (sigma_l^2 + (m1 - m0)^2 beta (1 - beta))`,
//! the expected transmit energy under MMSE centering, on top of the expected
//! cost-to-go. The amplitudes are free in `R_+^L`; the search runs over
//! `[0, alpha_hi]` per sensor and always includes the silent control
//! `alpha = 0`, which leaves the belief at `beta`.

use alloc::vec;
use alloc::vec::Vec;

use super::{locate_threshold, BeliefGrid, SolverSettings, ValueFunction};
use crate::error::{Error, Result};
use crate::model::{Belief, ChangeModel, NetworkModel};
use crate::quadrature::GaussHermite;

/// Price per unit energy for each sensor and per unit delay.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyWeights {
    pub lambda_energy: Vec<f64>,
    pub lambda_delay: f64,
}

impl EnergyWeights {
    pub fn uniform(sensors: usize, lambda_energy: f64, lambda_delay: f64) -> Self {
        Self { lambda_energy: vec![lambda_energy; sensors], lambda_delay }
    }

    /// Identical sensors priced identically: the search runs on a common amplitude.
    pub fn is_symmetric_on(&self, net: &NetworkModel) -> bool {
        net.is_symmetric() && self.lambda_energy.iter().all(|w| *w == self.lambda_energy[0])
    }

    fn validate(&self, net: &NetworkModel) -> Result<()> {
        net.check_len(self.lambda_energy.len())?;
        if self.lambda_energy.iter().any(|w| !(*w >= 0.0) || w.is_nan()) {
            return Err(Error::InvalidParameter { name: "lambda_energy", reason: "must be nonnegative" });
        }
        if !(self.lambda_delay > 0.0) || !self.lambda_delay.is_finite() {
            return Err(Error::InvalidParameter { name: "lambda_delay", reason: "must be finite and positive" });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergySettings {
    pub solver: SolverSettings,
    /// Upper end of the amplitude search; `None` picks `10 max_l sqrt(B_l / sigma_l^2)`.
    pub alpha_hi: Option<f64>,
    /// Coordinate-descent stopping tolerance on the stage cost.
    pub value_tol: f64,
}

impl Default for EnergySettings {
    fn default() -> Self {
        Self { solver: SolverSettings::default(), alpha_hi: None, value_tol: 1e-6 }
    }
}

/// Default search cap from the sensors' nominal budgets.
pub fn default_alpha_hi(net: &NetworkModel) -> f64 {
    10.0 * net
        .sensors()
        .iter()
        .map(|s| libm::sqrt(s.budget.value() / s.sigma_obs_sq))
        .fold(0.0, f64::max)
}

const SCAN_POINTS: usize = 24;
const GOLDEN_REL_TOL: f64 = 1e-7;
const MAX_CYCLES: usize = 50;

// ---------------------------------------------------------------------------
// Stage problem
// ---------------------------------------------------------------------------

struct StageProblem<'a> {
    model: &'a ChangeModel,
    net: &'a NetworkModel,
    quad: &'a GaussHermite,
    grid: &'a BeliefGrid,
    values: &'a [f64],
    beta: f64,
    /// `lambda_l (sigma_l^2 + Var(theta | beta))`.
    price: Vec<f64>,
}

impl<'a> StageProblem<'a> {
    fn cost(&self, alpha: &[f64]) -> f64 {
        let energy: f64 = self.price.iter().zip(alpha).map(|(w, a)| w * a * a).sum();
        energy + self.continuation(alpha)
    }

    fn continuation(&self, alpha: &[f64]) -> f64 {
        match self.net.effective_variance(alpha) {
            Ok(sigma_sq) => self.mixture_expectation(sigma_sq),
            Err(_) => self.grid.interpolate(self.values, self.beta),
        }
    }

    fn mixture_expectation(&self, sigma_sq: f64) -> f64 {
        let sd = libm::sqrt(sigma_sq);
        let mut acc = 0.0;
        for (mean, mass) in [(self.model.m0(), 1.0 - self.beta), (self.model.m1(), self.beta)] {
            if mass <= 0.0 {
                continue;
            }
            let mut part = 0.0;
            for (z, w) in self.quad.nodes().iter().zip(self.quad.weights()) {
                let post = self.model.posterior_from_prior(mean + sd * z, self.beta, sigma_sq);
                part += w * self.grid.interpolate(self.values, post);
            }
            acc += mass * part;
        }
        acc
    }

    /// Best amplitudes and their cost, warm-started from `start`.
    fn minimize(&self, start: &[f64], alpha_hi: f64, symmetric: bool, value_tol: f64) -> (Vec<f64>, f64) {
        let n = start.len();
        if symmetric {
            let (a, v) = line_search(|a| self.cost(&vec![a; n]), alpha_hi);
            return (vec![a; n], v);
        }
        let mut alpha = start.to_vec();
        let mut best = self.cost(&alpha);
        for _ in 0..MAX_CYCLES {
            let before = best;
            for l in 0..n {
                let mut trial = alpha.clone();
                let (a, v) = line_search(
                    |x| {
                        trial[l] = x;
                        self.cost(&trial)
                    },
                    alpha_hi,
                );
                if v < best {
                    alpha[l] = a;
                    best = v;
                }
            }
            if before - best < value_tol {
                break;
            }
        }
        (alpha, best)
    }
}

/// Coarse scan of `[0, hi]` followed by golden-section refinement around the
/// best scan point. Returns the minimizer and value.
fn line_search<F: FnMut(f64) -> f64>(mut f: F, hi: f64) -> (f64, f64) {
    let step = hi / SCAN_POINTS as f64;
    let mut best = (0.0, f(0.0));
    let mut best_j = 0;
    for j in 1..=SCAN_POINTS {
        let x = step * j as f64;
        let v = f(x);
        if v < best.1 {
            best = (x, v);
            best_j = j;
        }
    }
    let mut lo = step * best_j.saturating_sub(1) as f64;
    let mut up = (step * (best_j + 1) as f64).min(hi);
    let inv_phi = 0.5 * (libm::sqrt(5.0) - 1.0);
    let mut x1 = up - inv_phi * (up - lo);
    let mut x2 = lo + inv_phi * (up - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while up - lo > GOLDEN_REL_TOL * hi {
        if f1 <= f2 {
            up = x2;
            x2 = x1;
            f2 = f1;
            x1 = up - inv_phi * (up - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (up - lo);
            f2 = f(x2);
        }
    }
    for (x, v) in [(x1, f1), (x2, f2)] {
        if v < best.1 {
            best = (x, v);
        }
    }
    best
}

fn stage_problem<'a>(
    model: &'a ChangeModel,
    net: &'a NetworkModel,
    weights: &EnergyWeights,
    quad: &'a GaussHermite,
    grid: &'a BeliefGrid,
    values: &'a [f64],
    mu: f64,
) -> StageProblem<'a> {
    let beta = model.prior_update(Belief::clamped(mu));
    let prior_var = model.state_variance(beta);
    let price = net
        .sensors()
        .iter()
        .zip(&weights.lambda_energy)
        .map(|(s, w)| w * (s.sigma_obs_sq + prior_var))
        .collect();
    StageProblem { model, net, quad, grid, values, beta, price }
}

/// Energy price plus expected cost-to-go of continuing from `mu` with `alpha`.
pub fn stage_cost(
    model: &ChangeModel,
    net: &NetworkModel,
    weights: &EnergyWeights,
    quad: &GaussHermite,
    vf: &ValueFunction,
    mu: f64,
    alpha: &[f64],
) -> f64 {
    stage_problem(model, net, weights, quad, &vf.grid, &vf.values, mu).cost(alpha)
}

/// Minimizing amplitudes of [`stage_cost`] over `[0, alpha_hi]^L`.
pub fn minimize_stage(
    model: &ChangeModel,
    net: &NetworkModel,
    weights: &EnergyWeights,
    quad: &GaussHermite,
    vf: &ValueFunction,
    mu: f64,
    alpha_hi: f64,
) -> (Vec<f64>, f64) {
    let symmetric = weights.is_symmetric_on(net);
    let start = vec![0.0; net.len()];
    stage_problem(model, net, weights, quad, &vf.grid, &vf.values, mu).minimize(&start, alpha_hi, symmetric, 1e-6)
}

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

/// Value iteration with the energy-priced stage cost. The returned value
/// function carries the minimizing amplitudes per grid point and the search
/// cap in `search_cap`.
pub fn energy_bellman_solve(
    model: &ChangeModel,
    net: &NetworkModel,
    weights: &EnergyWeights,
    settings: &EnergySettings,
    quad: &GaussHermite,
) -> Result<ValueFunction> {
    settings.solver.validate()?;
    weights.validate(net)?;
    let alpha_hi = settings.alpha_hi.unwrap_or_else(|| default_alpha_hi(net));
    if !(alpha_hi > 0.0) || !alpha_hi.is_finite() {
        return Err(Error::InvalidParameter { name: "alpha_hi", reason: "must be finite and positive" });
    }
    let symmetric = weights.is_symmetric_on(net);
    let lambda = weights.lambda_delay;
    let grid = BeliefGrid::new(settings.solver.grid_points);
    let mus = grid.points();
    let n = net.len();

    let stage = |values: &[f64], mu: f64, start: &[f64]| {
        stage_problem(model, net, weights, quad, &grid, values, mu).minimize(start, alpha_hi, symmetric, settings.value_tol)
    };

    let mut values: Vec<f64> = mus.iter().map(|m| 1.0 - m).collect();
    let mut next = values.clone();
    let mut table = vec![vec![0.0; n]; grid.len()];
    let mut residuals = Vec::new();
    loop {
        let mut residual: f64 = 0.0;
        for (i, &mu) in mus.iter().enumerate() {
            let (alpha, cost) = stage(&values, mu, &table[i]);
            table[i] = alpha;
            let v = (1.0 - mu).min(lambda * mu + cost);
            residual = residual.max((v - values[i]).abs());
            next[i] = v;
        }
        core::mem::swap(&mut values, &mut next);
        residuals.push(residual);
        if residual < settings.solver.tol {
            break;
        }
        if residuals.len() >= settings.solver.max_iterations {
            return Err(Error::NotConverged { iterations: residuals.len(), residual });
        }
    }

    // Controls and stopping gaps consistent with the converged values.
    let mut gaps = Vec::with_capacity(grid.len());
    for (i, &mu) in mus.iter().enumerate() {
        let (alpha, cost) = stage(&values, mu, &table[i]);
        table[i] = alpha;
        gaps.push(lambda * mu + cost - (1.0 - mu));
    }

    let mut vf = ValueFunction {
        grid,
        values,
        mu_star: 0.0,
        stop_immediately: false,
        lambda,
        iterations: residuals.len(),
        residuals,
        controls: None,
        search_cap: Some(alpha_hi),
    };
    let threshold = locate_threshold(&grid, &gaps, |mu| {
        let (i, _) = grid.locate(mu);
        let (_, cost) = stage(&vf.values, mu, &table[i]);
        lambda * mu + cost - (1.0 - mu)
    });
    match threshold {
        Ok(mu_star) => vf.mu_star = mu_star,
        Err(Error::NoSignChange) => vf.stop_immediately = true,
        Err(e) => return Err(e),
    }
    vf.controls = Some(table);
    Ok(vf)
}
