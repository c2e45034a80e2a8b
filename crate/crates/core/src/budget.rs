//! Coupling between the simulator budget `T = n·r` and the Monte-Carlo
//! sample size `m`: critical budgets, pilot-based IMSE extrapolation and
//! classification of `m·B²_T`.

use serde::{Deserialize, Serialize};

use crate::error::{positive, Error, Result};

/// Lower edge of the balanced band for `m·B²_T`.
pub const BALANCED_LOW: f64 = 0.1;
/// Upper edge of the balanced band for `m·B²_T`.
pub const BALANCED_HIGH: f64 = 10.0;

/// Eigenvalue-decay family used by the critical-budget formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelRegime {
    /// Tensorised Matérn of smoothness `nu` in `d` dimensions.
    MaternTensor { nu: f64, d: usize },
    /// Gaussian kernel, Lebesgue-type eigenvalue bound in `d` dimensions.
    GaussianLebesgue { d: usize },
    /// Gaussian kernel under a Gaussian design measure with decay constant `xi`.
    GaussianMeasure { xi: f64 },
}

impl KernelRegime {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelRegime::MaternTensor { nu, d } => {
                if !(nu > 0.5 && nu.is_finite()) {
                    return Err(Error::InvalidParameter {
                        name: "nu",
                        reason: format!("must exceed 1/2, got {nu}"),
                    });
                }
                check_dim(d)
            }
            KernelRegime::GaussianLebesgue { d } => check_dim(d),
            KernelRegime::GaussianMeasure { xi } => positive("xi", xi),
        }
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidParameter {
            name: "d",
            reason: "dimension must be at least 1".into(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    MonteCarloDominated,
    Balanced,
    /// Surrogate error dominates; the estimator is biased and intervals are not valid.
    SurrogateDominated,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BudgetOptions {
    /// Use `T/σ²ε = m^{...} log(m)^{d-1}` for Matérn, without the second noise factor.
    pub matern_single_noise_factor: bool,
}

fn check_m(m: f64) -> Result<()> {
    if !(m > 1.0 && m.is_finite()) {
        return Err(Error::NonpositiveLog {
            context: "log(m)",
            value: m,
        });
    }
    Ok(())
}

/// Critical budget with the Matérn formula taken literally
/// (`T/σ²ε = σ²ε · m^{1/(1 − 1/(2ν+1))} · log(m)^{d−1}`).
pub fn critical_budget(regime: &KernelRegime, m: f64, noise_variance: f64) -> Result<f64> {
    critical_budget_with_options(regime, m, noise_variance, BudgetOptions::default())
}

pub fn critical_budget_with_options(
    regime: &KernelRegime,
    m: f64,
    noise_variance: f64,
    options: BudgetOptions,
) -> Result<f64> {
    regime.validate()?;
    positive("noise_variance", noise_variance)?;
    check_m(m)?;
    let lm = m.ln();
    let ratio = match *regime {
        KernelRegime::MaternTensor { nu, d } => {
            let exponent = 1.0 / (1.0 - 1.0 / (2.0 * (nu + 0.5)));
            let extra = if options.matern_single_noise_factor {
                1.0
            } else {
                noise_variance
            };
            extra * m.powf(exponent) * lm.powi(d as i32 - 1)
        }
        KernelRegime::GaussianLebesgue { d } => m * lm.powi(d as i32),
        KernelRegime::GaussianMeasure { xi } => xi * m * lm,
    };
    Ok(noise_variance * ratio)
}

/// `IMSE_T ≈ imse0 · T0 log(T/σ²ε) / (T log(T0/σ²ε))`.
pub fn extrapolate_imse(imse0: f64, t0: f64, noise_variance: f64, t: f64) -> Result<f64> {
    positive("imse0", imse0)?;
    positive("pilot budget", t0)?;
    positive("noise_variance", noise_variance)?;
    positive("budget", t)?;
    let l0 = log_ratio("log(T0/σ²ε)", t0 / noise_variance)?;
    let l = log_ratio("log(T/σ²ε)", t / noise_variance)?;
    Ok(imse0 * t0 * l / (t * l0))
}

fn log_ratio(context: &'static str, value: f64) -> Result<f64> {
    if !(value > 1.0) {
        return Err(Error::NonpositiveLog { context, value });
    }
    Ok(value.ln())
}

/// `C = log(T0/σ²ε) / (T0 · imse0)`, so that the extrapolated IMSE reads
/// `log(T/σ²ε) / (C T)`.
pub fn pilot_constant(imse0: f64, t0: f64, noise_variance: f64) -> Result<f64> {
    positive("imse0", imse0)?;
    positive("pilot budget", t0)?;
    positive("noise_variance", noise_variance)?;
    let l0 = log_ratio("log(T0/σ²ε)", t0 / noise_variance)?;
    Ok(l0 / (t0 * imse0))
}

/// `T = (m/C) log(m/(C σ²ε))`: approximately the budget at which the
/// extrapolated IMSE equals `1/m`.
pub fn plan_budget_from_pilot(imse0: f64, t0: f64, noise_variance: f64, m: f64) -> Result<f64> {
    check_m(m)?;
    let c = pilot_constant(imse0, t0, noise_variance)?;
    let l = log_ratio("log(m/(C σ²ε))", m / (c * noise_variance))?;
    Ok(m / c * l)
}

/// Budget at which the extrapolated IMSE equals `target`, by fixed-point
/// iteration on `T = log(T/σ²ε) / (C · target)` started from the pilot plan.
pub fn solve_budget_for_imse(imse0: f64, t0: f64, noise_variance: f64, target: f64) -> Result<f64> {
    positive("target", target)?;
    let c = pilot_constant(imse0, t0, noise_variance)?;
    let k = 1.0 / (c * target);
    // The map T ↦ k log(T/σ²ε) contracts on the branch above k.
    let mut t = k * log_ratio("log(1/(C σ²ε target))", k / noise_variance)?.max(1.0);
    for _ in 0..200 {
        let next = k * log_ratio("log(T/σ²ε)", t / noise_variance)?;
        if (next - t).abs() <= 1e-14 * t {
            return Ok(next);
        }
        t = next;
    }
    Ok(t)
}

/// Budget rule of the coverage experiment: `T = σ²ε (m^α / C) log(m/C)`.
pub fn coverage_budget(m: f64, alpha: f64, noise_variance: f64, c: f64) -> Result<f64> {
    positive("noise_variance", noise_variance)?;
    positive("C", c)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            reason: format!("must be positive, got {alpha}"),
        });
    }
    let l = log_ratio("log(m/C)", m / c)?;
    Ok(noise_variance * m.powf(alpha) / c * l)
}

pub fn regime_classify(m: f64, bt2: f64) -> Regime {
    let product = m * bt2;
    if product < BALANCED_LOW {
        Regime::MonteCarloDominated
    } else if product <= BALANCED_HIGH {
        Regime::Balanced
    } else {
        log::warn!(
            "m·B² = {product:.3e} exceeds {BALANCED_HIGH}: surrogate error dominates, \
             the Sobol estimate is biased and its confidence interval is not valid"
        );
        Regime::SurrogateDominated
    }
}

/// Where the `B²_T` value behind a plan's classification came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bt2Source {
    /// The critical budget sets `m·B²_T = 1` to leading order.
    CriticalPoint,
    /// Extrapolated IMSE, a lower bound within a factor 2 of `B²_T`.
    PilotExtrapolation,
    /// Computed from an eigenvalue spectrum.
    Spectrum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetPlan {
    pub m: f64,
    pub budget: f64,
    pub kernel_regime: Option<KernelRegime>,
    pub noise_variance: f64,
    pub bt2: f64,
    pub bt2_source: Bt2Source,
    pub m_bt2: f64,
    pub regime: Regime,
    pub thresholds: [f64; 2],
}

impl BudgetPlan {
    fn assemble(
        m: f64,
        budget: f64,
        kernel_regime: Option<KernelRegime>,
        noise_variance: f64,
        bt2: f64,
        bt2_source: Bt2Source,
    ) -> Self {
        Self {
            m,
            budget,
            kernel_regime,
            noise_variance,
            bt2,
            bt2_source,
            m_bt2: m * bt2,
            regime: regime_classify(m, bt2),
            thresholds: [BALANCED_LOW, BALANCED_HIGH],
        }
    }

    pub fn critical(
        kernel_regime: KernelRegime,
        m: f64,
        noise_variance: f64,
        options: BudgetOptions,
    ) -> Result<Self> {
        let t = critical_budget_with_options(&kernel_regime, m, noise_variance, options)?;
        Ok(Self::assemble(
            m,
            t,
            Some(kernel_regime),
            noise_variance,
            1.0 / m,
            Bt2Source::CriticalPoint,
        ))
    }

    pub fn from_pilot(imse0: f64, t0: f64, noise_variance: f64, m: f64) -> Result<Self> {
        let t = plan_budget_from_pilot(imse0, t0, noise_variance, m)?;
        let bt2 = extrapolate_imse(imse0, t0, noise_variance, t)?;
        Ok(Self::assemble(
            m,
            t,
            None,
            noise_variance,
            bt2,
            Bt2Source::PilotExtrapolation,
        ))
    }

    /// Classifies a given budget against a known, descending eigenvalue spectrum.
    pub fn from_spectrum(eigenvalues: &[f64], noise_variance: f64, budget: f64, m: f64) -> Result<Self> {
        check_m(m)?;
        let bt2 = crate::surrogate::bt_squared(eigenvalues, noise_variance, budget)?;
        Ok(Self::assemble(
            m,
            budget,
            None,
            noise_variance,
            bt2,
            Bt2Source::Spectrum,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    #[test]
    fn critical_budget_examples() {
        let g = critical_budget(&KernelRegime::GaussianLebesgue { d: 1 }, 1000.0, 1.0).unwrap();
        assert!(close(g, 6_907.755_278_982_137, 1e-12));
        let gm = critical_budget(&KernelRegime::GaussianMeasure { xi: 2.0 }, 100.0, 1.0).unwrap();
        assert!(close(gm, 921.034_037_197_618_3, 1e-12));
        let mt = critical_budget(&KernelRegime::MaternTensor { nu: 1.5, d: 1 }, 1000.0, 1.0).unwrap();
        assert!(close(mt, 1e4, 1e-12));
    }

    #[test]
    fn matern_noise_factor_flag() {
        let r = KernelRegime::MaternTensor { nu: 2.5, d: 2 };
        let printed = critical_budget(&r, 500.0, 0.3).unwrap();
        let single = critical_budget_with_options(
            &r,
            500.0,
            0.3,
            BudgetOptions {
                matern_single_noise_factor: true,
            },
        )
        .unwrap();
        assert!(close(printed, 0.3 * single, 1e-14));
    }

    #[test]
    fn critical_budgets_increase_in_m() {
        let regimes = [
            KernelRegime::MaternTensor { nu: 1.5, d: 3 },
            KernelRegime::GaussianLebesgue { d: 2 },
            KernelRegime::GaussianMeasure { xi: 0.7 },
        ];
        for r in &regimes {
            let mut prev = 0.0;
            for m in 3..2000 {
                let t = critical_budget(r, m as f64, 0.5).unwrap();
                assert!(t > prev);
                prev = t;
            }
        }
    }

    #[test]
    fn degenerate_inputs_rejected() {
        let r = KernelRegime::GaussianLebesgue { d: 1 };
        assert!(critical_budget(&r, 1.0, 1.0).is_err());
        assert!(critical_budget(&r, 10.0, 0.0).is_err());
        assert!(critical_budget(&KernelRegime::MaternTensor { nu: 0.5, d: 1 }, 10.0, 1.0).is_err());
        assert!(extrapolate_imse(0.5, 10.0, 20.0, 100.0).is_err());
        assert!(coverage_budget(0.001, 1.0, 1.0, 0.01).is_err());
    }

    #[test]
    fn extrapolation_examples() {
        assert_eq!(extrapolate_imse(0.606, 3000.0, 0.0674, 3000.0).unwrap(), 0.606);
        let v = extrapolate_imse(0.606, 3000.0, 0.0674, 30000.0).unwrap();
        let want = 0.606 * 3000.0 * (30000.0f64 / 0.0674).ln() / (30000.0 * (3000.0f64 / 0.0674).ln());
        assert!(close(v, want, 1e-14));
        assert!((v - 0.07364).abs() < 5e-5);
        let mut prev = f64::INFINITY;
        for k in 1..200 {
            let t = 0.0674 * std::f64::consts::E * 1.1f64.powi(k);
            let cur = extrapolate_imse(0.606, 3000.0, 0.0674, t).unwrap();
            assert!(cur < prev);
            prev = cur;
        }
    }

    #[test]
    fn pilot_plan_examples() {
        let c = pilot_constant(0.606, 3000.0, 0.0674).unwrap();
        assert!((c - 5.887e-3).abs() < 1e-6);
        let t = plan_budget_from_pilot(0.606, 3000.0, 0.0674, 3000.0).unwrap();
        assert!((t / 8.07e6 - 1.0).abs() < 1e-3, "{t}");

        // C σ²ε = 1 and m = e collapse the log.
        let nv: f64 = 0.5;
        let t0: f64 = 40.0;
        let imse0 = (t0 / nv).ln() * nv / t0;
        let c = pilot_constant(imse0, t0, nv).unwrap();
        assert!(close(c * nv, 1.0, 1e-14));
        let e = std::f64::consts::E;
        assert!(close(plan_budget_from_pilot(imse0, t0, nv, e).unwrap(), e / c, 1e-14));
    }

    #[test]
    fn plan_round_trip_has_log_log_excess() {
        // With L = log(m/(C σ²ε)), m · IMSE_T = 1 + log(L)/L for the plan budget.
        for &imse0 in &[0.05, 0.3, 0.606] {
            for &t0 in &[500.0, 3000.0, 2e4] {
                for &nv in &[0.01, 0.0674, 0.5] {
                    for &m in &[100.0, 1000.0, 3000.0, 1e5] {
                        let t = plan_budget_from_pilot(imse0, t0, nv, m).unwrap();
                        let back = extrapolate_imse(imse0, t0, nv, t).unwrap();
                        let c = pilot_constant(imse0, t0, nv).unwrap();
                        let l = (m / (c * nv)).ln();
                        assert!(close(back * m, 1.0 + l.ln() / l, 1e-10));
                        let exact = solve_budget_for_imse(imse0, t0, nv, 1.0 / m).unwrap();
                        let hit = extrapolate_imse(imse0, t0, nv, exact).unwrap();
                        assert!(close(hit * m, 1.0, 1e-10), "{imse0} {t0} {nv} {m}");
                    }
                }
            }
        }
    }

    #[test]
    fn regime_bands() {
        assert_eq!(regime_classify(100.0, 0.01), Regime::Balanced);
        assert_eq!(regime_classify(1000.0, 1e-6), Regime::MonteCarloDominated);
        assert_eq!(regime_classify(1000.0, 1.0), Regime::SurrogateDominated);
        let mut last = Regime::MonteCarloDominated;
        let rank = |r: Regime| match r {
            Regime::MonteCarloDominated => 0,
            Regime::Balanced => 1,
            Regime::SurrogateDominated => 2,
        };
        for k in -60..60 {
            let r = regime_classify(1.0, 10f64.powf(k as f64 / 10.0));
            assert!(rank(r) >= rank(last));
            last = r;
        }
    }

    #[test]
    fn plans_serialize() {
        let plan =
            BudgetPlan::critical(KernelRegime::GaussianLebesgue { d: 1 }, 1000.0, 1.0, BudgetOptions::default())
                .unwrap();
        assert_eq!(plan.regime, Regime::Balanced);
        let s = serde_json_like(&plan);
        assert!(s.contains("gaussian_lebesgue"));
        let pilot = BudgetPlan::from_pilot(0.606, 3000.0, 0.0674, 3000.0).unwrap();
        assert_eq!(pilot.regime, Regime::Balanced);
        assert!(pilot.m_bt2 > 1.0 && pilot.m_bt2 < 1.2);
    }

    fn serde_json_like(plan: &BudgetPlan) -> String {
        toml::to_string(plan).unwrap()
    }

    #[test]
    fn spectrum_plan() {
        let eigs: Vec<f64> = (0..200).map(|k| 0.5f64.powi(k)).collect();
        let plan = BudgetPlan::from_spectrum(&eigs, 1.0, 1e6, 1000.0).unwrap();
        let s: f64 = 1e-6;
        let want: f64 = eigs.iter().map(|&l| l.min(s)).sum();
        assert!(close(plan.bt2, want, 1e-12));
    }
}
