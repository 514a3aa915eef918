//! Independent reference computations shared by the integration and
//! acceptance suites. Nothing here calls into the solver paths it checks.
#![allow(dead_code)]

use std::f64::consts::PI;

// ---------------------------------------------------------------------------
// Effective-variance minimization by brute force
// ---------------------------------------------------------------------------

/// Plain sensor description, independent of the library's types.
#[derive(Debug, Clone, Copy)]
pub struct RawSensor {
    pub sigma_sq: f64,
    pub gain: f64,
    pub alpha_max: f64,
}

/// `(sum (sigma h alpha)^2 + mac) / (sum h alpha)^2`, infinite when silent.
pub fn variance(sensors: &[RawSensor], mac: f64, alpha: &[f64]) -> f64 {
    let a: f64 = sensors.iter().zip(alpha).map(|(s, al)| s.gain * al).sum();
    if a <= 0.0 {
        return f64::INFINITY;
    }
    let noise: f64 = sensors
        .iter()
        .zip(alpha)
        .map(|(s, al)| s.sigma_sq * (s.gain * al).powi(2))
        .sum();
    (noise + mac) / (a * a)
}

/// Coordinate pattern search on the unit box, halving the step to `min_step`.
pub fn pattern_search<F: Fn(&[f64]) -> f64>(f: &F, start: Vec<f64>, step: f64, min_step: f64) -> (Vec<f64>, f64) {
    let mut t = start;
    let mut best = f(&t);
    let mut step = step;
    while step >= min_step {
        let mut improved = false;
        for l in 0..t.len() {
            for sign in [1.0, -1.0] {
                let old = t[l];
                t[l] = (old + sign * step).clamp(0.0, 1.0);
                let v = f(&t);
                if v < best {
                    best = v;
                    improved = true;
                } else {
                    t[l] = old;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (t, best)
}

/// Minimum effective variance over the amplitude box: exhaustive grid in
/// normalized coordinates `alpha_l = t_l alpha_max_l` followed by local refinement.
/// Two sensors use step 1e-3; more sensors use a coarser grid of about 2.5e5 points.
pub fn min_variance_grid(sensors: &[RawSensor], mac: f64) -> (Vec<f64>, f64) {
    let n = sensors.len();
    let per_axis: usize = if n <= 2 { 1001 } else { (250_000f64.powf(1.0 / n as f64)).floor() as usize };
    let step = 1.0 / (per_axis - 1) as f64;
    let to_alpha = |t: &[f64]| -> Vec<f64> { t.iter().zip(sensors).map(|(t, s)| t * s.alpha_max).collect() };
    let f = |t: &[f64]| variance(sensors, mac, &to_alpha(t));

    let mut idx = vec![0usize; n];
    let mut t = vec![0.0; n];
    let mut best_t = vec![1.0; n];
    let mut best = f(&best_t);
    loop {
        for l in 0..n {
            t[l] = idx[l] as f64 * step;
        }
        let v = f(&t);
        if v < best {
            best = v;
            best_t.copy_from_slice(&t);
        }
        let mut l = 0;
        while l < n {
            idx[l] += 1;
            if idx[l] < per_axis {
                break;
            }
            idx[l] = 0;
            l += 1;
        }
        if l == n {
            break;
        }
    }
    let (t, v) = pattern_search(&f, best_t, step, 1e-13);
    (to_alpha(&t), v)
}

/// Minimum of `sum sigma^2 h^2 alpha^2` subject to `sum h alpha = a` on the box,
/// by projected gradient in `u_l = h_l alpha_l`. The projection onto
/// `{sum u = a, 0 <= u_l <= h_l alpha_max_l}` is `clip(z - shift)` with the
/// shift found by bisection.
pub fn inner_qp_projected_gradient(sensors: &[RawSensor], a: f64) -> f64 {
    let upper: Vec<f64> = sensors.iter().map(|s| s.gain * s.alpha_max).collect();
    let project = |z: &[f64]| -> Vec<f64> {
        let total = |shift: f64| -> f64 { z.iter().zip(&upper).map(|(z, u)| (z - shift).clamp(0.0, *u)).sum() };
        let (mut lo, mut hi) = (-1e6, 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if total(mid) > a {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let shift = 0.5 * (lo + hi);
        z.iter().zip(&upper).map(|(z, u)| (z - shift).clamp(0.0, *u)).collect()
    };
    let curvature = sensors.iter().map(|s| 2.0 * s.sigma_sq).fold(0.0, f64::max);
    let step = 1.0 / curvature;
    let mut u = project(&vec![a / sensors.len() as f64; sensors.len()]);
    for _ in 0..20_000 {
        let z: Vec<f64> = u.iter().zip(sensors).map(|(u, s)| u - step * 2.0 * s.sigma_sq * u).collect();
        u = project(&z);
    }
    u.iter().zip(sensors).map(|(u, s)| s.sigma_sq * u * u).sum()
}

// ---------------------------------------------------------------------------
// Bayes posterior by summing over change times
// ---------------------------------------------------------------------------

pub fn normal_pdf(y: f64, mean: f64, var: f64) -> f64 {
    (-(y - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// `Pr{Gamma <= n | y_1..y_n}` with `Pr{Gamma = 0} = nu`,
/// `Pr{Gamma = k} = (1 - nu) p (1 - p)^(k-1)`; observation `k` has variance `vars[k-1]`.
pub fn brute_force_posterior(m0: f64, m1: f64, p: f64, nu: f64, ys: &[f64], vars: &[f64]) -> f64 {
    let n = ys.len();
    let likelihood = |gamma: usize| -> f64 {
        (1..=n)
            .map(|k| {
                let mean = if k >= gamma { m1 } else { m0 };
                normal_pdf(ys[k - 1], mean, vars[k - 1])
            })
            .product()
    };
    let mut changed = nu * likelihood(0);
    for gamma in 1..=n {
        changed += (1.0 - nu) * p * (1.0 - p).powi(gamma as i32 - 1) * likelihood(gamma);
    }
    // Gamma > n: all observations pre-change.
    let unchanged = (1.0 - nu) * (1.0 - p).powi(n as i32) * likelihood(usize::MAX);
    changed / (changed + unchanged)
}

// ---------------------------------------------------------------------------
// Uninformative observations: the belief evolves deterministically
// ---------------------------------------------------------------------------

/// Value iteration on a uniform grid for `J(mu) = min(1 - mu, lambda mu + J(beta(mu)))`
/// with linear interpolation, iterated until the sup change is below `tol`.
pub fn scalar_grid_recursion(p: f64, lambda: f64, points: usize, tol: f64) -> Vec<f64> {
    let h = 1.0 / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|i| i as f64 * h).collect();
    let mut j: Vec<f64> = grid.iter().map(|m| 1.0 - m).collect();
    loop {
        let next: Vec<f64> = grid
            .iter()
            .map(|&mu| {
                let beta = mu + (1.0 - mu) * p;
                let x = beta / h;
                let i = (x.floor() as usize).min(points - 2);
                let frac = x - i as f64;
                let cont = lambda * mu + j[i] * (1.0 - frac) + j[i + 1] * frac;
                (1.0 - mu).min(cont)
            })
            .collect();
        let diff = next.iter().zip(&j).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        j = next;
        if diff < tol {
            return j;
        }
    }
}

/// Exact value without a grid: minimize over the number of further samples `n`
/// the cost `sum_{k<n} lambda mu_k + (1 - mu_n)` with `1 - mu_k = (1 - mu)(1 - p)^k`.
pub fn scalar_exact(p: f64, lambda: f64, mu: f64) -> f64 {
    let mut best = 1.0 - mu;
    let mut running = 0.0;
    let mut survive = 1.0 - mu;
    for _ in 0..100_000 {
        running += lambda * (1.0 - survive);
        survive *= 1.0 - p;
        best = best.min(running + survive);
        if running > best {
            break;
        }
    }
    best
}
