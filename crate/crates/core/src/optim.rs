//! Unconstrained BFGS minimization with a backtracking Armijo line search.

/// Stopping rules for [`bfgs_minimize`].
#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub f_tol: f64,
    pub max_backtracks: usize,
    /// Longest step allowed in one iteration (Euclidean norm).
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-6,
            f_tol: 1e-12,
            max_backtracks: 40,
            max_step: 5.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes from `x0`. `value` returns `None` where the objective is undefined;
/// `value_grad` supplies the value and gradient at accepted points.
///
/// Returns `None` only when the objective is undefined at `x0`.
pub fn bfgs_minimize<V, G>(
    mut value: V,
    mut value_grad: G,
    x0: &[f64],
    opts: &BfgsOptions,
) -> Option<BfgsOutcome>
where
    V: FnMut(&[f64]) -> Option<f64>,
    G: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut f, mut g) = value_grad(&x)?;
    let mut h = identity(n);
    let mut scaled = false;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        if g.iter().all(|v| v.abs() < opts.grad_tol) {
            converged = true;
            break;
        }
        iterations += 1;
        let mut p: Vec<f64> = (0..n).map(|i| -dot(&h[i], &g)).collect();
        let mut slope = dot(&g, &p);
        if slope >= 0.0 {
            h = identity(n);
            p = g.iter().map(|v| -v).collect();
            slope = dot(&g, &p);
        }
        let norm = dot(&p, &p).sqrt();
        if norm > opts.max_step {
            let s = opts.max_step / norm;
            p.iter_mut().for_each(|v| *v *= s);
            slope *= s;
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let trial: Vec<f64> = x.iter().zip(&p).map(|(xi, pi)| xi + t * pi).collect();
            if let Some(ft) = value(&trial) {
                if ft.is_finite() && ft <= f + 1e-4 * t * slope {
                    accepted = Some(trial);
                    break;
                }
            }
            t *= 0.5;
        }
        let Some(x_new) = accepted else {
            break;
        };
        let Some((f_new, g_new)) = value_grad(&x_new) else {
            break;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if !scaled {
                let gamma = sy / dot(&y, &y);
                h = identity(n);
                h.iter_mut()
                    .enumerate()
                    .for_each(|(i, row)| row[i] = gamma);
                scaled = true;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }

        let decrease = f - f_new;
        x = x_new;
        f = f_new;
        g = g_new;
        if decrease.abs() <= opts.f_tol * (1.0 + f.abs()) {
            converged = true;
            break;
        }
    }

    Some(BfgsOutcome {
        x,
        value: f,
        iterations,
        converged,
    })
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// `H ← (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ`, `ρ = 1/(sᵀy)`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}
