//! Experiment drivers: interval coverage of the surrogate-based Sobol
//! estimator on the heat problem, and convergence of the finite-data MSE to
//! its spectral limit.
//!
//! Every replicate draws from its own ChaCha8 stream
//! (`seed`, stream `cell · R + replicate`), so results do not depend on the
//! order in which replicates run.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::budget::{coverage_budget, pilot_constant, regime_classify, Regime};
use crate::error::{Error, Result};
use crate::heat::{exact_sobol_indices, HeatConfig};
use crate::kernels::{EigenSystem, GaussianMeasure, KernelSpec};
use crate::quadrature::GaussHermite;
use crate::sobol::{
    confidence_interval, estimate_sobol, pick_freeze_sample, try_estimate_sobol, EvaluatorKind,
    FrozenSet,
};
use crate::surrogate::{bt_squared, spectral_mse, GpModel, SpectralModel};

/// Default relative tail tolerance for truncated eigensystems.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-10;

/// Surrogate used inside coverage replicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageEvaluator {
    /// Idealized spectral surrogate of the exact solution.
    Spectral,
    /// Finite-data BLUP on noisy observations of the exact solution.
    Blup,
    /// The exact solution itself (no surrogate error).
    Exact,
}

/// Pilot quantities defining `C = log(T0/σ²ε) / (T0 · IMSE_{T0})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotConfig {
    pub imse: f64,
    pub budget: f64,
    pub noise_variance: f64,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self {
            imse: 0.606,
            budget: 3000.0,
            noise_variance: 0.0674,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageCell {
    pub m: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoverageConfig {
    pub heat: HeatConfig,
    pub grid: Vec<CoverageCell>,
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
    pub evaluator: CoverageEvaluator,
    pub kernel: KernelSpec,
    pub pilot: PilotConfig,
    /// Design size for the BLUP evaluator; replications are `ceil(T/n)`.
    pub blup_points: usize,
    pub tail_tolerance: f64,
    pub quadrature_nodes: usize,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self {
            heat: HeatConfig::desk_scale(),
            grid: vec![
                CoverageCell {
                    m: 1000,
                    alpha: 0.8,
                },
                CoverageCell {
                    m: 3000,
                    alpha: 1.0,
                },
            ],
            replicates: 200,
            level: 0.9,
            seed: 2024,
            evaluator: CoverageEvaluator::Spectral,
            kernel: KernelSpec {
                family: crate::kernels::KernelFamily::SquaredExponential,
                lengthscales: vec![1.01, 1.02],
                signal_variance: 1.46,
                nu: None,
            },
            pilot: PilotConfig::default(),
            blup_points: 500,
            tail_tolerance: DEFAULT_TAIL_TOLERANCE,
            quadrature_nodes: 160,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub m: usize,
    pub alpha: f64,
    pub budget: f64,
    /// `m · B²_T` when a spectrum is available.
    pub m_bt2: Option<f64>,
    pub regime: Option<Regime>,
    /// Coverage in percent, one entry per input coordinate.
    pub coverage: Vec<f64>,
    pub mean_index: Vec<f64>,
    /// Standard deviation of `√m (Ŝ − S)` across replicates.
    pub empirical_sd: Vec<f64>,
    /// Mean plug-in standard deviation across replicates.
    pub plug_in_sd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub evaluator: CoverageEvaluator,
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
    /// `100 · sqrt(β(1−β)/R)`.
    pub binomial_se: f64,
    pub exact_indices: Vec<f64>,
    pub pilot_constant: f64,
    pub cells: Vec<CellReport>,
}

impl CoverageReport {
    /// One row per (cell, index).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "m",
            "alpha",
            "budget",
            "index",
            "exact",
            "coverage_pct",
            "binomial_se_pct",
            "mean_estimate",
            "empirical_sd",
            "plug_in_sd",
            "m_bt2",
        ])?;
        for cell in &self.cells {
            for j in 0..cell.coverage.len() {
                w.write_record([
                    cell.m.to_string(),
                    cell.alpha.to_string(),
                    cell.budget.to_string(),
                    (j + 1).to_string(),
                    self.exact_indices[j].to_string(),
                    cell.coverage[j].to_string(),
                    self.binomial_se.to_string(),
                    cell.mean_index[j].to_string(),
                    cell.empirical_sd[j].to_string(),
                    cell.plug_in_sd[j].to_string(),
                    cell.m_bt2.map(|v| v.to_string()).unwrap_or_default(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn replicate_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

enum Prepared {
    Spectral {
        eig: Arc<EigenSystem>,
        truth: Vec<f64>,
    },
    Blup,
    Exact,
}

fn prepare(cfg: &CoverageConfig) -> Result<Prepared> {
    match cfg.evaluator {
        CoverageEvaluator::Exact => Ok(Prepared::Exact),
        CoverageEvaluator::Blup => Ok(Prepared::Blup),
        CoverageEvaluator::Spectral => {
            let measure = cfg.heat.measure()?;
            let eig = EigenSystem::with_tail_tolerance(&cfg.kernel, &measure, cfg.tail_tolerance)?;
            let rule = GaussHermite::new(cfg.quadrature_nodes)?;
            let heat = &cfg.heat;
            let truth = eig.project_separable(&measure, &rule, |axis, x| {
                let s2 = heat.sigma_g2[axis];
                let w = s2 + heat.t;
                (s2 / w).sqrt() * (-0.5 * x * x / w).exp()
            })?;
            Ok(Prepared::Spectral {
                eig: Arc::new(eig),
                truth,
            })
        }
    }
}

fn validate_coverage(cfg: &CoverageConfig) -> Result<()> {
    cfg.heat.validate()?;
    if cfg.grid.is_empty() {
        return Err(Error::EmptyInput("coverage grid"));
    }
    if cfg.replicates < 10 {
        return Err(Error::InvalidParameter {
            name: "replicates",
            reason: format!("need at least 10, got {}", cfg.replicates),
        });
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::InvalidParameter {
            name: "level",
            reason: format!("must lie in (0, 1), got {}", cfg.level),
        });
    }
    if cfg.evaluator != CoverageEvaluator::Exact {
        cfg.kernel.validate()?;
        if cfg.kernel.dim() != cfg.heat.dim() {
            return Err(Error::DimensionMismatch {
                expected: cfg.heat.dim(),
                got: cfg.kernel.dim(),
            });
        }
    }
    if cfg.evaluator == CoverageEvaluator::Blup && cfg.blup_points == 0 {
        return Err(Error::EmptyInput("blup_points"));
    }
    Ok(())
}

/// Runs `R` pick-freeze estimations per grid cell and reports how often the
/// level-β interval covers the exact index of each coordinate.
pub fn run_coverage_experiment(cfg: &CoverageConfig) -> Result<CoverageReport> {
    validate_coverage(cfg)?;
    let d = cfg.heat.dim();
    let exact = exact_sobol_indices(&cfg.heat)?;
    let measure = cfg.heat.measure()?;
    let c = pilot_constant(cfg.pilot.imse, cfg.pilot.budget, cfg.pilot.noise_variance)?;
    let noise_variance = cfg.pilot.noise_variance;
    let prepared = prepare(cfg)?;
    let frozen: Vec<FrozenSet> = (0..d)
        .map(|j| FrozenSet::new(d, vec![j]))
        .collect::<Result<_>>()?;

    let mut cells = Vec::with_capacity(cfg.grid.len());
    for (ci, cell) in cfg.grid.iter().enumerate() {
        let m = cell.m;
        let budget = coverage_budget(m as f64, cell.alpha, noise_variance, c)?;
        let (m_bt2, regime) = match &prepared {
            Prepared::Spectral { eig, .. } => {
                let b2 = bt_squared(eig.eigenvalues(), noise_variance, budget)? + eig.tail_mass();
                (Some(m as f64 * b2), Some(regime_classify(m as f64, b2)))
            }
            _ => (None, None),
        };
        log::info!(
            "coverage cell m={m} alpha={} budget={budget:.4e} m·B²={m_bt2:?}",
            cell.alpha
        );

        let mut hits = vec![0usize; d];
        let mut estimates = vec![Vec::with_capacity(cfg.replicates); d];
        let mut plug_sd = vec![0.0; d];
        for rep in 0..cfg.replicates {
            let stream = (ci * cfg.replicates + rep) as u64;
            let mut rng = replicate_rng(cfg.seed, stream);
            let outcome = run_replicate(
                cfg,
                &prepared,
                &measure,
                &frozen,
                m,
                budget,
                noise_variance,
                &mut rng,
            )?;
            for (j, (est, lo, hi)) in outcome.into_iter().enumerate() {
                if lo <= exact[j] && exact[j] <= hi {
                    hits[j] += 1;
                }
                estimates[j].push(est.index);
                plug_sd[j] += est.variance.sqrt();
            }
        }
        let r = cfg.replicates as f64;
        let sqrt_m = (m as f64).sqrt();
        cells.push(CellReport {
            m,
            alpha: cell.alpha,
            budget,
            m_bt2,
            regime,
            coverage: hits.iter().map(|&h| 100.0 * h as f64 / r).collect(),
            mean_index: estimates
                .iter()
                .map(|e| e.iter().sum::<f64>() / r)
                .collect(),
            empirical_sd: estimates.iter().map(|e| sqrt_m * sd(e)).collect(),
            plug_in_sd: plug_sd.iter().map(|s| s / r).collect(),
        });
    }

    Ok(CoverageReport {
        evaluator: cfg.evaluator,
        replicates: cfg.replicates,
        level: cfg.level,
        seed: cfg.seed,
        binomial_se: 100.0 * (cfg.level * (1.0 - cfg.level) / cfg.replicates as f64).sqrt(),
        exact_indices: exact,
        pilot_constant: c,
        cells,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_replicate(
    cfg: &CoverageConfig,
    prepared: &Prepared,
    measure: &GaussianMeasure,
    frozen: &[FrozenSet],
    m: usize,
    budget: f64,
    noise_variance: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(crate::sobol::SobolEstimate, f64, f64)>> {
    let heat = &cfg.heat;
    let blup;
    let spectral;
    let evaluator: Box<dyn Fn(&[f64]) -> Result<f64>> = match prepared {
        Prepared::Exact => Box::new(|x: &[f64]| Ok(heat.solution_unchecked(x))),
        Prepared::Spectral { eig, truth } => {
            spectral = SpectralModel::observe(eig.clone(), budget, noise_variance, truth, rng)?;
            Box::new(|x: &[f64]| spectral.predict(x))
        }
        Prepared::Blup => {
            let n = cfg.blup_points;
            let r = (budget / n as f64).ceil().max(1.0);
            let sd_obs = (noise_variance / r).sqrt();
            let points: Vec<Vec<f64>> = (0..n).map(|_| measure.sample(rng)).collect();
            let z: Vec<f64> = points
                .iter()
                .map(|x| {
                    let e: f64 = rng.sample(rand_distr::StandardNormal);
                    heat.solution_unchecked(x) + sd_obs * e
                })
                .collect();
            blup = GpModel::from_parts(cfg.kernel.clone(), points, &z, noise_variance / r)?;
            Box::new(|x: &[f64]| blup.predict_mean(x))
        }
    };
    let kind = match prepared {
        Prepared::Exact => EvaluatorKind::Exact,
        _ => EvaluatorKind::Surrogate,
    };
    frozen
        .iter()
        .map(|fs| {
            let sample = pick_freeze_sample(measure, fs, m, rng)?;
            let est = try_estimate_sobol(&evaluator, &sample, kind)?.with_budget(budget);
            let (lo, hi) = confidence_interval(&est, cfg.level)?;
            Ok((est, lo, hi))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceConfig {
    pub kernel: KernelSpec,
    pub measure: GaussianMeasure,
    pub budget: f64,
    pub noise_variance: f64,
    pub levels: Vec<usize>,
    pub test_points: usize,
    pub seed: u64,
    pub tail_tolerance: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec {
                family: crate::kernels::KernelFamily::SquaredExponential,
                lengthscales: vec![1.0],
                signal_variance: 1.0,
                nu: None,
            },
            measure: GaussianMeasure {
                dim: 1,
                variance: 1.0,
            },
            budget: 1e3,
            noise_variance: 1.0,
            levels: vec![50, 200, 800],
            test_points: 20,
            seed: 0,
            tail_tolerance: DEFAULT_TAIL_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub n: usize,
    pub nugget: f64,
    pub median_gap: f64,
    pub max_gap: f64,
    pub condition_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub budget: f64,
    pub noise_variance: f64,
    pub seed: u64,
    pub tail_mass: f64,
    pub rows: Vec<GapRow>,
}

impl ConvergenceReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["n", "nugget", "median_gap", "max_gap", "condition_estimate"])?;
        for row in &self.rows {
            w.write_record([
                row.n.to_string(),
                row.nugget.to_string(),
                row.median_gap.to_string(),
                row.max_gap.to_string(),
                row.condition_estimate.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// At each design size `n`, compares the finite-data MSE (nugget `n σ²ε / T`)
/// with its spectral limit at fixed test points drawn from the measure.
pub fn run_convergence_check(cfg: &ConvergenceConfig) -> Result<ConvergenceReport> {
    cfg.kernel.validate()?;
    cfg.measure.validate()?;
    crate::error::positive("budget", cfg.budget)?;
    crate::error::positive("noise_variance", cfg.noise_variance)?;
    if cfg.levels.is_empty() {
        return Err(Error::EmptyInput("levels"));
    }
    if cfg.levels.windows(2).any(|w| w[1] <= w[0]) || cfg.levels[0] == 0 {
        return Err(Error::InvalidParameter {
            name: "levels",
            reason: format!("must be positive and strictly increasing, got {:?}", cfg.levels),
        });
    }
    if cfg.test_points == 0 {
        return Err(Error::EmptyInput("test_points"));
    }
    let eig = EigenSystem::with_tail_tolerance(&cfg.kernel, &cfg.measure, cfg.tail_tolerance)?;

    let mut rng = replicate_rng(cfg.seed, 0);
    let tests: Vec<Vec<f64>> = (0..cfg.test_points)
        .map(|_| cfg.measure.sample(&mut rng))
        .collect();
    let limit: Vec<f64> = tests
        .iter()
        .map(|x| spectral_mse(&eig, cfg.budget, cfg.noise_variance, x))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(cfg.levels.len());
    for (k, &n) in cfg.levels.iter().enumerate() {
        let mut rng = replicate_rng(cfg.seed, 1 + k as u64);
        let design: Vec<Vec<f64>> = (0..n).map(|_| cfg.measure.sample(&mut rng)).collect();
        let nugget = n as f64 * cfg.noise_variance / cfg.budget;
        let model = GpModel::from_parts(cfg.kernel.clone(), design, &vec![0.0; n], nugget)?;
        let mut gaps: Vec<f64> = tests
            .iter()
            .zip(&limit)
            .map(|(x, l)| Ok((model.predict(x)?.mse - l).abs()))
            .collect::<Result<_>>()?;
        let max_gap = gaps.iter().cloned().fold(0.0, f64::max);
        rows.push(GapRow {
            n,
            nugget,
            median_gap: median(&mut gaps),
            max_gap,
            condition_estimate: model.condition_estimate(),
        });
    }
    Ok(ConvergenceReport {
        budget: cfg.budget,
        noise_variance: cfg.noise_variance,
        seed: cfg.seed,
        tail_mass: eig.tail_mass(),
        rows,
    })
}

/// Exact-function pick-freeze estimate, exposed for drivers that only need
/// one index of the heat problem.
pub fn exact_heat_estimate<R: Rng + ?Sized>(
    heat: &HeatConfig,
    frozen: &FrozenSet,
    m: usize,
    rng: &mut R,
) -> Result<crate::sobol::SobolEstimate> {
    let measure = heat.measure()?;
    let sample = pick_freeze_sample(&measure, frozen, m, rng)?;
    estimate_sobol(|x| heat.solution_unchecked(x), &sample, EvaluatorKind::Exact)
}
