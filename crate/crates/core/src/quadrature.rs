//! Gauss–Hermite quadrature.
//!
//! Nodes are found by Newton iteration on the orthonormal Hermite recurrence,
//! which keeps the weights accurate in relative terms out in the tails. That
//! matters when the integrand contains high-order Hermite functions.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const NEWTON_TOL: f64 = 3e-15;
const NEWTON_MAX_ITER: usize = 100;

/// Gauss–Hermite rule for `∫ e^{-x²} f(x) dx` over the real line.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "nodes",
                reason: "a quadrature rule needs at least one node".into(),
            });
        }
        let pim4 = PI.powf(-0.25);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let half = n.div_ceil(2);
        let nf = n as f64;
        let mut z = 0.0_f64;
        for i in 0..half {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut derivative = 0.0;
            for _ in 0..NEWTON_MAX_ITER {
                let (p_n, p_nm1) = orthonormal_pair(n, z, pim4);
                derivative = (2.0 * nf).sqrt() * p_nm1;
                let step = p_n / derivative;
                z -= step;
                if step.abs() <= NEWTON_TOL * z.abs().max(1.0) {
                    break;
                }
            }
            let (_, p_nm1) = orthonormal_pair(n, z, pim4);
            derivative = if p_nm1 != 0.0 {
                (2.0 * nf).sqrt() * p_nm1
            } else {
                derivative
            };
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            let w = 2.0 / (derivative * derivative);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[half - 1] = 0.0;
        }
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫ e^{-x²} f(x) dx`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Expectation of `f(X)` for `X ~ N(0, sigma²)`.
    pub fn gaussian_expectation<F: FnMut(f64) -> f64>(&self, sigma: f64, mut f: F) -> f64 {
        let scale = std::f64::consts::SQRT_2 * sigma;
        self.integrate(|y| f(scale * y)) / PI.sqrt()
    }

    /// Expectation of `f(X)` for `X ~ N(0, sigma² I_d)` using the tensor-product rule.
    ///
    /// Cost is `len()^d` evaluations.
    pub fn gaussian_expectation_nd<F: FnMut(&[f64]) -> f64>(
        &self,
        sigma: f64,
        d: usize,
        mut f: F,
    ) -> f64 {
        let n = self.len();
        let scale = std::f64::consts::SQRT_2 * sigma;
        let norm = PI.powf(-(d as f64) / 2.0);
        let mut counter = vec![0usize; d];
        let mut point = vec![0.0; d];
        let mut total = 0.0;
        'outer: loop {
            let mut w = 1.0;
            for (axis, &k) in counter.iter().enumerate() {
                point[axis] = scale * self.nodes[k];
                w *= self.weights[k];
            }
            total += w * f(&point);
            for slot in counter.iter_mut() {
                *slot += 1;
                if *slot < n {
                    continue 'outer;
                }
                *slot = 0;
            }
            break;
        }
        total * norm
    }
}

/// Orthonormal Hermite values `(p_n(z), p_{n-1}(z))` with `∫ e^{-x²} p_j p_k = δ_jk`.
fn orthonormal_pair(n: usize, z: f64, pim4: f64) -> (f64, f64) {
    let mut p1 = pim4;
    let mut p2 = 0.0;
    for j in 0..n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
    }
    (p1, p2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_low_moments_exactly() {
        let rule = GaussHermite::new(20).unwrap();
        assert!((rule.integrate(|_| 1.0) - PI.sqrt()).abs() < 1e-13);
        assert!((rule.integrate(|x| x * x) - PI.sqrt() / 2.0).abs() < 1e-13);
        assert!(rule.integrate(|x| x.powi(5)).abs() < 1e-12);
    }

    #[test]
    fn gaussian_moments() {
        let rule = GaussHermite::new(40).unwrap();
        let sigma = 2.0;
        assert!((rule.gaussian_expectation(sigma, |x| x * x) - 4.0).abs() < 1e-12);
        assert!((rule.gaussian_expectation(sigma, |x| x.powi(4)) - 48.0).abs() < 1e-10);
        let e2 = rule.gaussian_expectation_nd(sigma, 2, |p| p[0] * p[0] * p[1] * p[1]);
        assert!((e2 - 16.0).abs() < 1e-10);
    }

    #[test]
    fn high_order_orthonormality_holds_in_the_tails() {
        let rule = GaussHermite::new(160).unwrap();
        let pim4 = PI.powf(-0.25);
        let mut worst = 0.0_f64;
        for p in [0usize, 10, 25, 40] {
            for q in [0usize, 10, 25, 40] {
                let v = rule.integrate(|x| {
                    orthonormal_pair(p + 1, x, pim4).1 * orthonormal_pair(q + 1, x, pim4).1
                });
                let target = if p == q { 1.0 } else { 0.0 };
                worst = worst.max((v - target).abs());
            }
        }
        assert!(worst < 1e-10, "worst = {worst:e}");
    }

    #[test]
    fn odd_rule_has_center_node() {
        let rule = GaussHermite::new(7).unwrap();
        assert_eq!(rule.nodes()[3], 0.0);
        assert!(GaussHermite::new(0).is_err());
    }
}
