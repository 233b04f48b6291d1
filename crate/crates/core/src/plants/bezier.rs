//! Bezier polynomials on `τ ∈ [0, 1]` and their first two derivatives.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bezier {
    pub coeffs: Vec<f64>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `Σ c_i C(n,i) τ^i (1−τ)^(n−i)` for `n = coeffs.len() − 1`.
fn bernstein_sum(coeffs: &[f64], tau: f64) -> f64 {
    if coeffs.is_empty() {
        return 0.0;
    }
    let n = coeffs.len() - 1;
    coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| c * binomial(n, i) * tau.powi(i as i32) * (1.0 - tau).powi((n - i) as i32))
        .sum()
}

impl Bezier {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn value(&self, tau: f64) -> f64 {
        bernstein_sum(&self.coeffs, tau)
    }

    pub fn d1(&self, tau: f64) -> f64 {
        let n = self.degree();
        if n == 0 {
            return 0.0;
        }
        let diff: Vec<f64> = self.coeffs.windows(2).map(|w| w[1] - w[0]).collect();
        n as f64 * bernstein_sum(&diff, tau)
    }

    pub fn d2(&self, tau: f64) -> f64 {
        let n = self.degree();
        if n < 2 {
            return 0.0;
        }
        let diff: Vec<f64> = self
            .coeffs
            .windows(3)
            .map(|w| w[2] - 2.0 * w[1] + w[0])
            .collect();
        (n * (n - 1)) as f64 * bernstein_sum(&diff, tau)
    }
}
