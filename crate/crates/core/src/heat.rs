//! Stochastic heat-equation test problem.
//!
//! `u(x, t) = E[g(x + W_t)]` with `g(y) = ∏_i exp(−y_i² / (2σ²_{g,i}))` and
//! `W_t ~ N(0, t I_d)`. The simulator averages `s` draws of `g(x + W_t)`; the
//! solution and its first-order Sobol indices under `X ~ N(0, σ_μ² I_d)` are
//! known in closed form.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{positive, Error, Result};
use crate::kernels::GaussianMeasure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatConfig {
    pub sigma_g2: Vec<f64>,
    pub sigma_mu: f64,
    pub t: f64,
    /// Inner Monte-Carlo draws per code run.
    pub s: usize,
}

impl Default for HeatConfig {
    fn default() -> Self {
        Self {
            sigma_g2: vec![5.0, 3.0, 2.0, 1.0, 1.0],
            sigma_mu: 2.0,
            t: 1.0,
            s: 30,
        }
    }
}

impl HeatConfig {
    /// Reduced two-dimensional problem used for desk-scale coverage runs.
    pub fn desk_scale() -> Self {
        Self {
            sigma_g2: vec![5.0, 1.0],
            ..Self::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.sigma_g2.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_g2.is_empty() {
            return Err(Error::EmptyInput("sigma_g2"));
        }
        for &v in &self.sigma_g2 {
            positive("sigma_g2", v)?;
        }
        positive("sigma_mu", self.sigma_mu)?;
        positive("t", self.t)?;
        if self.s == 0 {
            return Err(Error::InvalidParameter {
                name: "s",
                reason: "need at least one inner draw".into(),
            });
        }
        Ok(())
    }

    /// Input distribution `N(0, σ_μ² I_d)`.
    pub fn measure(&self) -> Result<GaussianMeasure> {
        GaussianMeasure::from_std_dev(self.dim(), self.sigma_mu)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Initial condition `g`.
    pub fn initial_condition(&self, y: &[f64]) -> f64 {
        let q: f64 = y
            .iter()
            .zip(&self.sigma_g2)
            .map(|(v, s2)| v * v / s2)
            .sum();
        (-0.5 * q).exp()
    }

    /// `u(x, t)` without argument checks, at the configured time.
    pub fn solution_unchecked(&self, x: &[f64]) -> f64 {
        solution_at(&self.sigma_g2, x, self.t)
    }
}

fn solution_at(sigma_g2: &[f64], x: &[f64], t: f64) -> f64 {
    let mut log_amp = 0.0;
    let mut q = 0.0;
    for (v, &s2) in x.iter().zip(sigma_g2) {
        let w = s2 + t;
        log_amp += 0.5 * (s2 / w).ln();
        q += v * v / w;
    }
    (log_amp - 0.5 * q).exp()
}

/// `r` independent code outputs at `x`, each the mean of `s` draws of `g(x + W_t)`.
pub fn simulate_code<R: Rng + ?Sized>(
    cfg: &HeatConfig,
    x: &[f64],
    r: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    cfg.check_point(x)?;
    if r == 0 {
        return Err(Error::InvalidParameter {
            name: "r",
            reason: "need at least one replication".into(),
        });
    }
    let sd = cfg.t.sqrt();
    let mut y = vec![0.0; x.len()];
    let out = (0..r)
        .map(|_| {
            let mut acc = 0.0;
            for _ in 0..cfg.s {
                for (yi, xi) in y.iter_mut().zip(x) {
                    let z: f64 = rng.sample(StandardNormal);
                    *yi = xi + sd * z;
                }
                acc += cfg.initial_condition(&y);
            }
            acc / cfg.s as f64
        })
        .collect();
    Ok(out)
}

/// Closed-form `u(x, t)`.
pub fn exact_solution(cfg: &HeatConfig, x: &[f64], t: f64) -> Result<f64> {
    cfg.validate()?;
    cfg.check_point(x)?;
    positive("t", t)?;
    Ok(solution_at(&cfg.sigma_g2, x, t))
}

/// Exact first-order indices `S_j = (B_j − 1)/(∏_i B_i − 1)` with
/// `B_j = (1 + σ_μ²/s_j) / sqrt(1 + 2σ_μ²/s_j)` and `s_j = σ²_{g,j} + t`.
pub fn exact_sobol_indices(cfg: &HeatConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let m2 = cfg.sigma_mu * cfg.sigma_mu;
    let b: Vec<f64> = cfg
        .sigma_g2
        .iter()
        .map(|&s2| {
            let r = m2 / (s2 + cfg.t);
            (1.0 + r) / (1.0 + 2.0 * r).sqrt()
        })
        .collect();
    let denom = b.iter().product::<f64>() - 1.0;
    if !(denom > 0.0) {
        return Err(Error::DegenerateVariance { variance: denom });
    }
    Ok(b.iter().map(|bj| (bj - 1.0) / denom).collect())
}

/// Replicated training design: `n` points from the input measure and
/// `r` code outputs at each, drawn sequentially from `rng`.
pub fn simulate_design<R: Rng + ?Sized>(
    cfg: &HeatConfig,
    n: usize,
    r: usize,
    rng: &mut R,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::EmptyInput("design points"));
    }
    let measure = cfg.measure()?;
    let mut points = Vec::with_capacity(n);
    let mut outputs = Vec::with_capacity(n);
    for _ in 0..n {
        let x = measure.sample(rng);
        outputs.push(simulate_code(cfg, &x, r, rng)?);
        points.push(x);
    }
    Ok((points, outputs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sobol::{estimate_sobol, pick_freeze_sample, EvaluatorKind, FrozenSet};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_var(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    }

    #[test]
    fn solution_at_origin() {
        let cfg = HeatConfig::default();
        let u = exact_solution(&cfg, &[0.0; 5], 1.0).unwrap();
        let want = (5.0 / 6.0 * 3.0 / 4.0 * 2.0 / 3.0 * 0.5 * 0.5f64).sqrt();
        assert!((u - want).abs() < 1e-15);
        assert!((u - 0.32275).abs() < 1e-5);
    }

    #[test]
    fn small_time_recovers_initial_condition() {
        let cfg = HeatConfig::default();
        let x = [0.3, -1.0, 0.5, 2.0, -0.2];
        let u = exact_solution(&cfg, &x, 1e-12).unwrap();
        assert!((u - cfg.initial_condition(&x)).abs() < 1e-10);
    }

    #[test]
    fn solution_bounded_and_peaked_at_origin() {
        let cfg = HeatConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u0 = exact_solution(&cfg, &[0.0; 5], 1.0).unwrap();
        for _ in 0..1000 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-5.0..5.0)).collect();
            let u = exact_solution(&cfg, &x, 1.0).unwrap();
            assert!(u > 0.0 && u <= u0 && u <= 1.0);
        }
    }

    #[test]
    fn flat_initial_condition_gives_one() {
        let cfg = HeatConfig {
            sigma_g2: vec![f64::MAX; 3],
            ..HeatConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for v in simulate_code(&cfg, &[0.1, 0.2, 0.3], 10, &mut rng).unwrap() {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn code_mean_matches_solution_at_origin() {
        let cfg = HeatConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = 100_000 / cfg.s;
        let out = simulate_code(&cfg, &[0.0; 5], r, &mut rng).unwrap();
        let mean = out.iter().sum::<f64>() / r as f64;
        let se = (sample_var(&out) / r as f64).sqrt();
        let u = exact_solution(&cfg, &[0.0; 5], 1.0).unwrap();
        assert!((mean - u).abs() < 3.0 * se, "mean {mean} u {u} se {se}");
    }

    #[test]
    fn doubling_inner_draws_halves_output_variance() {
        let base = HeatConfig::default();
        let x = [0.5, -0.4, 1.0, 0.2, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = 4000;
        let v1 = sample_var(&simulate_code(&base, &x, r, &mut rng).unwrap());
        let doubled = HeatConfig { s: 60, ..base };
        let v2 = sample_var(&simulate_code(&doubled, &x, r, &mut rng).unwrap());
        // log of a variance ratio has sd ≈ sqrt(4/r) ≈ 0.032
        let ratio = v1 / v2;
        assert!((ratio.ln() - 2f64.ln()).abs() < 0.13, "ratio {ratio}");
    }

    #[test]
    fn code_is_unbiased_over_random_points() {
        let cfg = HeatConfig::default();
        let measure = cfg.measure().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut beyond = 0;
        for _ in 0..100 {
            let x = measure.sample(&mut rng);
            let out = simulate_code(&cfg, &x, 200, &mut rng).unwrap();
            let mean = out.iter().sum::<f64>() / out.len() as f64;
            let se = (sample_var(&out) / out.len() as f64).sqrt();
            let u = exact_solution(&cfg, &x, 1.0).unwrap();
            if se > 0.0 && ((mean - u) / se).abs() > 3.0 {
                beyond += 1;
            }
        }
        // about 0.27 exceedances expected
        assert!(beyond <= 3, "{beyond} points beyond 3σ");
    }

    #[test]
    fn indices_match_printed_values() {
        let s = exact_sobol_indices(&HeatConfig::default()).unwrap();
        let want = [0.052, 0.088, 0.124, 0.194, 0.194];
        for (a, b) in s.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-3, "{s:?}");
        }
        assert!(s.iter().sum::<f64>() <= 1.0);
    }

    #[test]
    fn symmetric_config_gives_equal_indices() {
        let cfg = HeatConfig {
            sigma_g2: vec![2.0; 4],
            ..HeatConfig::default()
        };
        let s = exact_sobol_indices(&cfg).unwrap();
        for v in &s {
            assert!((v - s[0]).abs() < 1e-15);
        }
    }

    #[test]
    fn indices_sum_below_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..500 {
            let d = rng.random_range(1..7);
            let cfg = HeatConfig {
                sigma_g2: (0..d).map(|_| rng.random_range(0.01..20.0)).collect(),
                sigma_mu: rng.random_range(0.1..5.0),
                t: rng.random_range(0.01..3.0),
                s: 1,
            };
            let s = exact_sobol_indices(&cfg).unwrap();
            assert!(s.iter().sum::<f64>() <= 1.0 + 1e-12);
        }
    }

    /// Exact index of X_j as Var(E[u|X_j]) / Var(u) by one- and d-dimensional
    /// Gaussian integrals computed independently of the closed form.
    #[test]
    fn indices_match_moment_integrals() {
        let cfg = HeatConfig::desk_scale();
        let m2 = cfg.sigma_mu * cfg.sigma_mu;
        // E[exp(−a X²)] for X ~ N(0, m2) is (1 + 2 a m2)^{-1/2}
        let e = |a: f64| (1.0 + 2.0 * a * m2).powf(-0.5);
        let amp: Vec<f64> = cfg
            .sigma_g2
            .iter()
            .map(|&s| (s / (s + cfg.t)).sqrt())
            .collect();
        let a: Vec<f64> = cfg.sigma_g2.iter().map(|&s| 0.5 / (s + cfg.t)).collect();
        let first: Vec<f64> = (0..2).map(|i| amp[i] * e(a[i])).collect();
        let second: Vec<f64> = (0..2).map(|i| amp[i] * amp[i] * e(2.0 * a[i])).collect();
        let var = second[0] * second[1] - (first[0] * first[1]).powi(2);
        let s = exact_sobol_indices(&cfg).unwrap();
        for j in 0..2 {
            let o = 1 - j;
            let vj = first[o] * first[o] * (second[j] - first[j] * first[j]);
            assert!((vj / var - s[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn pick_freeze_reproduces_indices() {
        let cfg = HeatConfig::default();
        let exact = exact_sobol_indices(&cfg).unwrap();
        let measure = cfg.measure().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for j in 0..5 {
            let fs = FrozenSet::new(5, vec![j]).unwrap();
            let sample = pick_freeze_sample(&measure, &fs, 1_000_000, &mut rng).unwrap();
            let est =
                estimate_sobol(|x| cfg.solution_unchecked(x), &sample, EvaluatorKind::Exact).unwrap();
            assert!((est.index - exact[j]).abs() < 0.005, "j={j} {}", est.index);
        }
    }

    #[test]
    fn design_is_reproducible() {
        let cfg = HeatConfig::default();
        let a = simulate_design(&cfg, 5, 3, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let b = simulate_design(&cfg, 5, 3, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1[0].len(), 3);
    }
}
