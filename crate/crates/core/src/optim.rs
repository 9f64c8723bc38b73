//! Quasi-Newton (BFGS) minimizer with Armijo backtracking, used for the
//! survival part of the M-step. Objectives here are smooth and
//! low-dimensional (K + 2 parameters at most), so a dense inverse-Hessian
//! approximation is plenty.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BfgsOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Deterministic perturbed re-starts tried when a line search stalls
    /// away from a stationary point.
    pub restarts: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iters: 200,
            grad_tol: 1e-8,
            restarts: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iters: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// One BFGS run from `x0`. Returns the best iterate and whether the
/// gradient tolerance was met; `None` from the objective means "not
/// evaluable here" and shrinks the step.
fn bfgs_run<F>(f: &F, x0: &[f64], opts: &BfgsOptions) -> Option<Minimum>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let (mut fx, mut gx) = f(x0)?;
    let mut x = x0.to_vec();
    if n == 0 {
        return Some(Minimum {
            x,
            value: fx,
            iters: 0,
            converged: true,
        });
    }

    // Inverse Hessian approximation, row-major identity.
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }

    let mut flat_steps = 0usize;
    for iter in 0..opts.max_iters {
        if norm_inf(&gx) < opts.grad_tol {
            return Some(Minimum {
                x,
                value: fx,
                iters: iter,
                converged: true,
            });
        }

        // Search direction d = −H g.
        let mut d = vec![0.0; n];
        for i in 0..n {
            d[i] = -(0..n).map(|j| h[i * n + j] * gx[j]).sum::<f64>();
        }
        let mut slope = dot(&gx, &d);
        if slope >= 0.0 {
            // H lost positive definiteness; reset to steepest descent.
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] = if i == j { 1.0 } else { 0.0 };
                }
            }
            for i in 0..n {
                d[i] = -gx[i];
            }
            slope = dot(&gx, &d);
        }

        // Armijo backtracking.
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            if let Some((ft, gt)) = f(&xt) {
                if ft <= fx + 1e-4 * t * slope {
                    accepted = Some((xt, ft, gt));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            // Dead end: no acceptable step in this direction.
            return Some(Minimum {
                x,
                value: fx,
                iters: iter,
                converged: norm_inf(&gx) < opts.grad_tol,
            });
        };

        // Once f stops moving at all, the objective is flat to machine
        // precision around the iterate; grinding on just random-walks x in
        // the flat basin. Two flat accepted steps in a row end the run.
        if fn_ >= fx {
            flat_steps += 1;
            if flat_steps >= 2 {
                return Some(Minimum {
                    x: xn,
                    value: fn_,
                    iters: iter + 1,
                    converged: true,
                });
            }
        } else {
            flat_steps = 0;
        }

        // BFGS inverse-Hessian update (skipped when curvature is bad).
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&gx).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm_inf(&s) * norm_inf(&y).max(1e-300) && sy > 0.0 {
            let rho = 1.0 / sy;
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ
            let mut hy = vec![0.0; n];
            for i in 0..n {
                hy[i] = (0..n).map(|j| h[i * n + j] * y[j]).sum();
            }
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] +=
                        (sy + yhy) * rho * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }

        x = xn;
        fx = fn_;
        gx = gn;
    }

    Some(Minimum {
        x,
        value: fx,
        iters: opts.max_iters,
        converged: norm_inf(&gx) < opts.grad_tol,
    })
}

/// Minimizes `f` starting from `x0`. When a run stalls with a large
/// gradient, retries from deterministically perturbed starts; if every
/// retry stalls, returns the best iterate inside an error.
///
/// `f` returns `(value, gradient)`, or `None` where the objective is not
/// finite. A run that merely hits `max_iters` is returned as-is with
/// `converged = false`.
pub fn minimize<F>(f: F, x0: &[f64], opts: &BfgsOptions) -> Result<Minimum>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let mut best: Option<Minimum> = None;
    let mut stalled = false;
    for attempt in 0..=opts.restarts {
        let start: Vec<f64> = if attempt == 0 {
            x0.to_vec()
        } else {
            // Fixed perturbation pattern keyed by the attempt number.
            x0.iter()
                .enumerate()
                .map(|(i, &v)| v + 0.25 * attempt as f64 * if i % 2 == 0 { 1.0 } else { -1.0 })
                .collect()
        };
        match bfgs_run(&f, &start, opts) {
            Some(m) => {
                let better = best.as_ref().is_none_or(|b| m.value < b.value);
                let done = m.converged || m.iters == opts.max_iters;
                stalled = !done;
                if better {
                    best = Some(m);
                }
                if done {
                    break;
                }
            }
            None => stalled = true, // objective not finite at this start
        }
    }
    match best {
        Some(m) if !stalled || m.converged => Ok(m),
        Some(m) => Err(Error::OptimFailed {
            message: "line search stalled away from a stationary point".into(),
            best_objective: m.value,
            best_point: m.x,
        }),
        None => Err(Error::OptimFailed {
            message: "objective not finite at any starting point".into(),
            best_objective: f64::INFINITY,
            best_point: x0.to_vec(),
        }),
    }
}
