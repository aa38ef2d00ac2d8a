//! Damped Gauss-Newton (Levenberg-Marquardt) for small dense least-squares
//! problems with a central-difference Jacobian.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Converged once the residual norm drops below this.
    pub tolerance: f64,
    /// Finite-difference step for the Jacobian.
    pub jacobian_step: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 200,
            tolerance: 1e-8,
            jacobian_step: 1e-6,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub x: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|r| r * r).sum::<f64>().sqrt()
}

fn jacobian<F>(f: &F, x: &[f64], m: usize, h: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut probe = x.to_vec();
    for j in 0..n {
        probe[j] = x[j] + h;
        let up = f(&probe);
        probe[j] = x[j] - h;
        let down = f(&probe);
        probe[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    jac
}

/// Minimizes `‖f(x)‖²`. Always returns the best point seen; `converged`
/// reports whether the tolerance was met.
pub fn minimize<F>(f: F, x0: &[f64], opts: &LmOptions) -> LmOutcome
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut x = x0.to_vec();
    let mut r = f(&x);
    let mut cost = norm(&r);
    let mut lambda = opts.initial_damping;
    let mut iterations = 0;

    while iterations < opts.max_iterations && cost >= opts.tolerance {
        iterations += 1;
        let jac = jacobian(&f, &x, r.len(), opts.jacobian_step);
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&r);

        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let step = match a.lu().solve(&(-&g)) {
                Some(s) => s,
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let r_trial = f(&trial);
            let c_trial = norm(&r_trial);
            if c_trial.is_finite() && c_trial < cost {
                let tiny = step.norm() <= 1e-15 * (1.0 + norm(&x));
                x = trial;
                r = r_trial;
                cost = c_trial;
                lambda = (lambda / 3.0).max(1e-15);
                improved = !tiny;
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }

    LmOutcome {
        x,
        residual_norm: cost,
        iterations,
        converged: cost < opts.tolerance,
    }
}
