//! Modified Bessel function of the second kind, `K_ν(x)`, for real order.
//!
//! Temme's series for `x < 2` and Steed's continued fraction otherwise, both
//! evaluated at the reduced order `μ = ν - round(ν)` and carried to `ν` by
//! forward recurrence.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;
const SERIES_SWITCH: f64 = 2.0;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `K_ν(x)` for real `ν` and `x > 0` (`K_{-ν} = K_ν`). Returns `NaN` for `x <= 0`.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    let nu = nu.abs();
    if !(x > 0.0) || !nu.is_finite() {
        return f64::NAN;
    }
    if x.is_infinite() {
        return 0.0;
    }
    let steps = (nu + 0.5).floor() as usize;
    let mu = nu - steps as f64;
    let (mut k_mu, mut k_mu1) = if x < SERIES_SWITCH {
        temme_series(mu, x)
    } else {
        steed_fraction(mu, x)
    };
    let two_over_x = 2.0 / x;
    for i in 1..=steps {
        let next = (mu + i as f64) * two_over_x * k_mu1 + k_mu;
        k_mu = k_mu1;
        k_mu1 = next;
    }
    k_mu
}

/// `(1/Γ(1-μ) - 1/Γ(1+μ)) / (2μ)` and `(1/Γ(1-μ) + 1/Γ(1+μ)) / 2`, `|μ| <= 1/2`.
fn temme_gammas(mu: f64) -> (f64, f64) {
    let inv_plus = 1.0 / gamma(1.0 + mu);
    let inv_minus = 1.0 / gamma(1.0 - mu);
    let gam2 = 0.5 * (inv_minus + inv_plus);
    let gam1 = if mu.abs() < 1e-3 {
        // Taylor expansion of 1/Γ(1+z) removes the cancellation near μ = 0.
        let mu2 = mu * mu;
        -EULER_GAMMA + mu2 * (0.042_002_635_034_095_2 + mu2 * 0.042_197_734_555_544_3)
    } else {
        (inv_minus - inv_plus) / (2.0 * mu)
    };
    (gam1, gam2)
}

fn temme_series(mu: f64, x: f64) -> (f64, f64) {
    let x2 = 0.5 * x;
    let pimu = PI * mu;
    let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
    let d = -x2.ln();
    let e = mu * d;
    let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
    let (gam1, gam2) = temme_gammas(mu);
    let gampl = 1.0 / gamma(1.0 + mu);
    let gammi = 1.0 / gamma(1.0 - mu);
    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let ee = e.exp();
    let mut p = 0.5 * ee / gampl;
    let mut q = 0.5 / (ee * gammi);
    let mut c = 1.0;
    let dd = x2 * x2;
    let mut sum1 = p;
    let mu2 = mu * mu;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu2);
        c *= dd / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        sum1 += c * (p - fi * ff);
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    (sum, sum1 * 2.0 / x)
}

fn steed_fraction(mu: f64, x: f64) -> (f64, f64) {
    let mu2 = mu * mu;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25 - mu2;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            break;
        }
    }
    h *= a1;
    let k_mu = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    let k_mu1 = k_mu * (mu + x + 0.5 - h) / x;
    (k_mu, k_mu1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn half_integer_orders_match_closed_forms() {
        for &x in &[0.05, 0.5, 1.0, 1.9, 2.0, 3.7, 10.0, 40.0] {
            let k12 = (PI / (2.0 * x)).sqrt() * (-x).exp();
            assert!(close(bessel_k(0.5, x), k12, 1e-13), "K_1/2({x})");
            let k32 = k12 * (1.0 + 1.0 / x);
            assert!(close(bessel_k(1.5, x), k32, 1e-13), "K_3/2({x})");
            let k52 = k12 * (1.0 + 3.0 / x + 3.0 / (x * x));
            assert!(close(bessel_k(2.5, x), k52, 1e-12), "K_5/2({x})");
        }
    }

    #[test]
    fn integer_orders_match_tabulated_values() {
        // Abramowitz & Stegun table 9.8 (scaled back) / high-precision references.
        assert!(close(bessel_k(0.0, 1.0), 0.421_024_438_240_708_3, 1e-13));
        assert!(close(bessel_k(1.0, 1.0), 0.601_907_230_197_234_6, 1e-13));
        assert!(close(bessel_k(0.0, 3.0), 0.034_739_504_386_279_6, 1e-12));
        assert!(close(bessel_k(2.0, 0.5), 7.550_183_551_240_869, 1e-12));
    }

    #[test]
    fn small_mu_branch_is_continuous() {
        for &x in &[0.3, 1.0, 1.8] {
            let mid = bessel_k(1.0, x);
            assert!((bessel_k(0.9995, x) - mid).abs() < 1e-2 * mid);
            assert!((bessel_k(1.0015, x) - mid).abs() < 1e-2 * mid);
        }
        // expansion and direct quotient agree where both are accurate
        let mu: f64 = 2e-3;
        let direct = (1.0 / gamma(1.0 - mu) - 1.0 / gamma(1.0 + mu)) / (2.0 * mu);
        let mu2 = mu * mu;
        let series =
            -EULER_GAMMA + mu2 * (0.042_002_635_034_095_2 + mu2 * 0.042_197_734_555_544_3);
        assert!((direct - series).abs() < 1e-10);
    }

    #[test]
    fn recurrence_identity() {
        // K_{ν+1}(x) = K_{ν-1}(x) + (2ν/x) K_ν(x)
        for &nu in &[0.7, 1.3, 2.2, 3.9] {
            for &x in &[0.4, 1.5, 2.5, 8.0] {
                let lhs = bessel_k(nu + 1.0, x);
                let rhs = bessel_k(nu - 1.0, x) + 2.0 * nu / x * bessel_k(nu, x);
                assert!(close(lhs, rhs, 1e-11), "nu={nu} x={x}");
            }
        }
    }

    #[test]
    fn rejects_bad_domain() {
        assert!(bessel_k(1.0, 0.0).is_nan());
        assert_eq!(bessel_k(-1.3, 1.0), bessel_k(1.3, 1.0));
        assert_eq!(bessel_k(1.0, f64::INFINITY), 0.0);
    }
}
