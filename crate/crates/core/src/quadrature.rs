//! Gauss–Hermite quadrature for expectations under a normal law.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Default node count for the expected cost-to-go integral.
pub const DEFAULT_NODES: usize = 33;

/// An `n`-point rule rescaled to the standard normal: `E[f(Z)] ~ sum w_i f(z_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Builds the rule by Newton iteration on the orthonormal Hermite
    /// recurrence, seeded with the usual asymptotic root estimates.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > 200 {
            return Err(Error::InvalidParameter { name: "quad_nodes", reason: "must lie in 1..=200" });
        }
        let pim4 = libm::pow(core::f64::consts::PI, -0.25);
        let nf = n as f64;
        let half = n.div_ceil(2);
        let mut x = vec_zeros(n);
        let mut w = vec_zeros(n);
        let mut z = 0.0;
        for i in 0..half {
            z = match i {
                0 => libm::sqrt(2.0 * nf + 1.0) - 1.85575 * libm::pow(2.0 * nf + 1.0, -0.16667),
                1 => z - 1.14 * libm::pow(nf, 0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * libm::sqrt(2.0 / (jf + 1.0)) * p2 - libm::sqrt(jf / (jf + 1.0)) * p3;
                }
                pp = libm::sqrt(2.0 * nf) * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 3e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        // Physicists' rule for e^{-x^2}; map to N(0, 1).
        let sqrt_pi = libm::sqrt(core::f64::consts::PI);
        let nodes = x.iter().rev().map(|v| core::f64::consts::SQRT_2 * v).collect();
        let weights = w.iter().rev().map(|v| v / sqrt_pi).collect();
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Standard-normal nodes, ascending.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights summing to one.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[f(X)]` for `X ~ N(mean, var)`.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mean: f64, var: f64, mut f: F) -> f64 {
        let sd = libm::sqrt(var);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(z, w)| w * f(mean + sd * z))
            .sum()
    }
}

impl Default for GaussHermite {
    fn default() -> Self {
        Self::new(DEFAULT_NODES).expect("default node count is valid")
    }
}

fn vec_zeros(n: usize) -> Vec<f64> {
    alloc::vec![0.0; n]
}
