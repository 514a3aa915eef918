//! Value iteration for the cost-to-go on a belief grid.
//!
//! The Bellman operator is
//! `J(mu) = min(1 - mu, lambda mu + A_J(mu))` where `A_J(mu)` is the expected
//! cost-to-go after one more sample taken with the best admissible control.
//! Which observation law follows a `continue` is abstracted by
//! [`ObservationKernel`]: it lists the successor beliefs and their
//! probabilities. With the power-constrained affine controls the law is a
//! two-component Gaussian mixture integrated by Gauss–Hermite quadrature.
//!
//! Sweeps are synchronous: every grid point reads the previous iterate.

pub mod energy;

use alloc::vec::Vec;

use crate::control::optimal_variance;
use crate::error::{Error, Result};
use crate::model::{Belief, Budget, ChangeModel, NetworkModel};
use crate::quadrature::GaussHermite;

pub use energy::{energy_bellman_solve, minimize_stage, stage_cost, EnergySettings, EnergyWeights};

/// Tolerance on `mu` when bisecting for the threshold.
pub const THRESHOLD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub grid_points: usize,
    /// Stop when the sup-norm change between sweeps drops below this.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { grid_points: 1000, tol: 1e-4, max_iterations: 100_000 }
    }
}

impl SolverSettings {
    fn validate(&self) -> Result<()> {
        if self.grid_points < 2 {
            return Err(Error::InvalidParameter { name: "grid_points", reason: "need at least 2 points" });
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter { name: "vi_tol", reason: "must be positive" });
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter { name: "max_iterations", reason: "must be positive" });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

/// Uniform grid on `[0, 1]` including both endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeliefGrid {
    points: usize,
}

impl BeliefGrid {
    pub fn new(points: usize) -> Self {
        debug_assert!(points >= 2);
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points == 0
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.points - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            1.0
        } else {
            i as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.point(i)).collect()
    }

    /// Left cell index and fractional offset of `mu`.
    #[inline]
    pub fn locate(&self, mu: f64) -> (usize, f64) {
        let x = mu.clamp(0.0, 1.0) * (self.points - 1) as f64;
        let i = (libm::floor(x) as usize).min(self.points - 2);
        (i, x - i as f64)
    }

    #[inline]
    pub fn interpolate(&self, values: &[f64], mu: f64) -> f64 {
        let (i, frac) = self.locate(mu);
        values[i] + frac * (values[i + 1] - values[i])
    }
}

// ---------------------------------------------------------------------------
// Observation kernels
// ---------------------------------------------------------------------------

/// One successor belief and its probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Successor {
    pub posterior: f64,
    pub weight: f64,
}

/// Law of the next belief when the fusion center continues from `mu`.
pub trait ObservationKernel {
    /// Appends the successors of `mu`; weights sum to one.
    fn successors(&self, mu: f64, out: &mut Vec<Successor>);
}

/// How the fused-noise variance follows the one-step prior `beta`.
#[derive(Debug, Clone, PartialEq)]
pub enum VarianceLaw {
    Fixed(f64),
    /// Minimized effective variance under the per-sensor power caps.
    PowerConstrained(NetworkModel),
}

impl VarianceLaw {
    pub fn variance(&self, beta: f64, model: &ChangeModel) -> f64 {
        match self {
            VarianceLaw::Fixed(v) => *v,
            VarianceLaw::PowerConstrained(net) => {
                optimal_variance(beta, model, net).expect("budgets validated at kernel construction")
            }
        }
    }
}

/// Gaussian observation `y = theta + N(0, sigma^2)` with `theta ~ m1` w.p. `beta`.
#[derive(Debug, Clone)]
pub struct GaussianKernel {
    model: ChangeModel,
    quad: GaussHermite,
    law: VarianceLaw,
}

impl GaussianKernel {
    pub fn fixed_variance(model: ChangeModel, sigma_sq: f64, quad: GaussHermite) -> Result<Self> {
        if !(sigma_sq > 0.0) || !sigma_sq.is_finite() {
            return Err(Error::InvalidParameter { name: "sigma_sq", reason: "must be finite and positive" });
        }
        Ok(Self { model, quad, law: VarianceLaw::Fixed(sigma_sq) })
    }

    pub fn power_constrained(model: ChangeModel, net: NetworkModel, quad: GaussHermite) -> Result<Self> {
        if let Some(l) = net.sensors().iter().position(|s| !matches!(s.budget, Budget::Power(_))) {
            return Err(Error::MissingPowerBudget { sensor: l });
        }
        Ok(Self { model, quad, law: VarianceLaw::PowerConstrained(net) })
    }

    pub fn model(&self) -> &ChangeModel {
        &self.model
    }

    pub fn quadrature(&self) -> &GaussHermite {
        &self.quad
    }

    pub fn law(&self) -> &VarianceLaw {
        &self.law
    }

    pub fn variance_at(&self, mu: f64) -> f64 {
        let beta = self.model.prior_update(Belief::clamped(mu));
        self.law.variance(beta, &self.model)
    }
}

impl ObservationKernel for GaussianKernel {
    fn successors(&self, mu: f64, out: &mut Vec<Successor>) {
        let beta = self.model.prior_update(Belief::clamped(mu));
        let sigma_sq = self.law.variance(beta, &self.model);
        push_mixture_successors(&self.model, &self.quad, beta, sigma_sq, out);
    }
}

/// Quadrature successors of the two-component mixture, one block per component.
pub(crate) fn push_mixture_successors(
    model: &ChangeModel,
    quad: &GaussHermite,
    beta: f64,
    sigma_sq: f64,
    out: &mut Vec<Successor>,
) {
    let sd = libm::sqrt(sigma_sq);
    for (mean, mass) in [(model.m0(), 1.0 - beta), (model.m1(), beta)] {
        if mass <= 0.0 {
            continue;
        }
        for (z, w) in quad.nodes().iter().zip(quad.weights()) {
            let y = mean + sd * z;
            out.push(Successor {
                posterior: model.posterior_from_prior(y, beta, sigma_sq),
                weight: mass * w,
            });
        }
    }
}

// ---------------------------------------------------------------------------
// Value function
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub grid: BeliefGrid,
    /// `J` at the grid points.
    pub values: Vec<f64>,
    /// Stop as soon as the belief reaches this level.
    pub mu_star: f64,
    /// Set when continuing is never better; `mu_star` is then 0.
    pub stop_immediately: bool,
    /// Delay cost per post-change sample.
    pub lambda: f64,
    pub iterations: usize,
    /// Sup-norm change of every sweep.
    pub residuals: Vec<f64>,
    /// Minimizing amplitudes per grid point (energy mode).
    pub controls: Option<Vec<Vec<f64>>>,
    /// Upper end of the amplitude search (energy mode).
    pub search_cap: Option<f64>,
}

impl ValueFunction {
    pub fn value_at(&self, mu: f64) -> f64 {
        self.grid.interpolate(&self.values, mu)
    }

    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }

    /// Interpolated amplitudes at `mu` from the control table.
    pub fn controls_at(&self, mu: f64) -> Option<Vec<f64>> {
        let table = self.controls.as_ref()?;
        let (i, frac) = self.grid.locate(mu);
        Some(
            table[i]
                .iter()
                .zip(&table[i + 1])
                .map(|(a, b)| a + frac * (b - a))
                .collect(),
        )
    }

    /// Same function with a different stopping level.
    pub fn with_threshold(mut self, mu_star: f64) -> Self {
        self.mu_star = mu_star.clamp(0.0, 1.0);
        self.stop_immediately = self.mu_star <= 0.0;
        self
    }
}

/// `E[J(psi(Y, mu))]` for observation noise variance `sigma_sq`, by quadrature.
pub fn expected_cost_to_go(
    mu: Belief,
    sigma_sq: f64,
    vf: &ValueFunction,
    model: &ChangeModel,
    quad: &GaussHermite,
) -> f64 {
    let beta = model.prior_update(mu);
    let mut succ = Vec::with_capacity(2 * quad.len());
    push_mixture_successors(model, quad, beta, sigma_sq, &mut succ);
    succ.iter().map(|s| s.weight * vf.value_at(s.posterior)).sum()
}

/// `A_J(mu)` under an arbitrary kernel.
pub fn continuation_value<K: ObservationKernel + ?Sized>(kernel: &K, vf: &ValueFunction, mu: f64) -> f64 {
    let mut succ = Vec::new();
    kernel.successors(mu, &mut succ);
    succ.iter().map(|s| s.weight * vf.value_at(s.posterior)).sum()
}

/// Successors of every grid point, resolved to interpolation cells.
struct Transitions {
    offsets: Vec<usize>,
    cells: Vec<u32>,
    fracs: Vec<f64>,
    weights: Vec<f64>,
}

impl Transitions {
    fn build<K: ObservationKernel + ?Sized>(kernel: &K, grid: &BeliefGrid) -> Self {
        let mut out = Self { offsets: Vec::with_capacity(grid.len() + 1), cells: Vec::new(), fracs: Vec::new(), weights: Vec::new() };
        let mut succ = Vec::new();
        out.offsets.push(0);
        for i in 0..grid.len() {
            succ.clear();
            kernel.successors(grid.point(i), &mut succ);
            for s in &succ {
                let (cell, frac) = grid.locate(s.posterior);
                out.cells.push(cell as u32);
                out.fracs.push(frac);
                out.weights.push(s.weight);
            }
            out.offsets.push(out.cells.len());
        }
        out
    }

    #[inline]
    fn expectation(&self, i: usize, values: &[f64]) -> f64 {
        let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
        let mut acc = 0.0;
        for j in lo..hi {
            let c = self.cells[j] as usize;
            let v = values[c] + self.fracs[j] * (values[c + 1] - values[c]);
            acc += self.weights[j] * v;
        }
        acc
    }
}

/// Value iteration under `kernel`, then the stopping threshold.
pub fn solve_with_kernel<K: ObservationKernel + ?Sized>(
    kernel: &K,
    lambda: f64,
    settings: &SolverSettings,
) -> Result<ValueFunction> {
    settings.validate()?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter { name: "lambda", reason: "must be finite and positive" });
    }
    let grid = BeliefGrid::new(settings.grid_points);
    let mus = grid.points();
    let trans = Transitions::build(kernel, &grid);

    let mut values: Vec<f64> = mus.iter().map(|m| 1.0 - m).collect();
    let mut next = values.clone();
    let mut residuals = Vec::new();
    loop {
        let mut residual: f64 = 0.0;
        for (i, &mu) in mus.iter().enumerate() {
            let v = (1.0 - mu).min(lambda * mu + trans.expectation(i, &values));
            residual = residual.max((v - values[i]).abs());
            next[i] = v;
        }
        core::mem::swap(&mut values, &mut next);
        residuals.push(residual);
        if residual < settings.tol {
            break;
        }
        if residuals.len() >= settings.max_iterations {
            return Err(Error::NotConverged { iterations: residuals.len(), residual });
        }
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
        search_cap: None,
    };
    let gaps: Vec<f64> = (0..grid.len())
        .map(|i| lambda * mus[i] + trans.expectation(i, &vf.values) - (1.0 - mus[i]))
        .collect();
    match locate_threshold(&grid, &gaps, |mu| lambda * mu + continuation_value(kernel, &vf, mu) - (1.0 - mu)) {
        Ok(mu_star) => vf.mu_star = mu_star,
        Err(Error::NoSignChange) => vf.stop_immediately = true,
        Err(e) => return Err(e),
    }
    Ok(vf)
}

/// Power-constrained value function with the optimal affine controls.
pub fn solve_value_function(
    model: &ChangeModel,
    net: &NetworkModel,
    lambda: f64,
    settings: &SolverSettings,
    quad: &GaussHermite,
) -> Result<ValueFunction> {
    let kernel = GaussianKernel::power_constrained(*model, net.clone(), quad.clone())?;
    solve_with_kernel(&kernel, lambda, settings)
}

/// Root of `d(mu) = lambda mu + A_J(mu) - (1 - mu)` under `kernel`.
pub fn stopping_threshold<K: ObservationKernel + ?Sized>(vf: &ValueFunction, kernel: &K) -> Result<f64> {
    let lambda = vf.lambda;
    let d = |mu: f64| lambda * mu + continuation_value(kernel, vf, mu) - (1.0 - mu);
    let gaps: Vec<f64> = (0..vf.grid.len()).map(|i| d(vf.grid.point(i))).collect();
    locate_threshold(&vf.grid, &gaps, d)
}

/// Brackets the sign change of `d` between the last grid point where it is
/// negative and the next one, then bisects.
pub(crate) fn locate_threshold<F: Fn(f64) -> f64>(grid: &BeliefGrid, gaps: &[f64], d: F) -> Result<f64> {
    let Some(last_neg) = gaps.iter().rposition(|&g| g < 0.0) else {
        return Err(Error::NoSignChange);
    };
    if last_neg + 1 == grid.len() {
        // d(1) = lambda > 0 in exact arithmetic.
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (grid.point(last_neg), grid.point(last_neg + 1));
    if gaps[last_neg + 1] == 0.0 {
        return Ok(hi);
    }
    while hi - lo > THRESHOLD_TOL {
        let mid = 0.5 * (lo + hi);
        if d(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}
