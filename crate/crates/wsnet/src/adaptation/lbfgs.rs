//! Limited-memory BFGS with two-loop recursion and Armijo backtracking.
//!
//! Small and deterministic; built for optimizing a single embedding vector
//! against a fixed objective. History size, step and backtracking limits are
//! conventional defaults, configurable from the experiment file.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LbfgsOptions {
    pub iterations: usize,
    pub history: usize,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub max_backtracks: usize,
    pub grad_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            iterations: 150,
            history: 10,
            c1: 1e-4,
            max_backtracks: 25,
            grad_tol: 1e-10,
        }
    }
}

pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub initial_f: f64,
    pub iterations_run: usize,
    pub line_search_failed: bool,
}

/// Minimizes `objective`, which writes the gradient into its second argument
/// and returns the function value. On line-search failure the best iterate
/// seen so far is returned, flagged.
pub fn lbfgs(
    x0: &[f64],
    opts: &LbfgsOptions,
    mut objective: impl FnMut(&[f64], &mut [f64]) -> f64,
) -> LbfgsOutcome {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = objective(&x, &mut g);
    let initial_f = f;
    let mut best_x = x.clone();
    let mut best_f = f;

    let mut s_hist: VecDeque<Vec<f64>> = VecDeque::new();
    let mut y_hist: VecDeque<Vec<f64>> = VecDeque::new();
    let mut rho_hist: VecDeque<f64> = VecDeque::new();
    let mut failed = false;
    let mut iters = 0usize;

    for _ in 0..opts.iterations {
        let gnorm2: f64 = g.iter().map(|v| v * v).sum();
        if gnorm2.sqrt() < opts.grad_tol {
            break;
        }

        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for i in (0..s_hist.len()).rev() {
            let alpha = rho_hist[i]
                * s_hist[i]
                    .iter()
                    .zip(q.iter())
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            for j in 0..n {
                q[j] -= alpha * y_hist[i][j];
            }
            alphas.push(alpha);
        }
        alphas.reverse();
        let gamma = if let (Some(s), Some(y)) = (s_hist.back(), y_hist.back()) {
            let sy: f64 = s.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
            let yy: f64 = y.iter().map(|v| v * v).sum();
            if yy > 0.0 {
                sy / yy
            } else {
                1.0
            }
        } else {
            1.0
        };
        for v in q.iter_mut() {
            *v *= gamma;
        }
        for i in 0..s_hist.len() {
            let beta = rho_hist[i]
                * y_hist[i]
                    .iter()
                    .zip(q.iter())
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            for j in 0..n {
                q[j] += s_hist[i][j] * (alphas[i] - beta);
            }
        }
        // q approximates H * g; descend along -q
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut dg: f64 = dir.iter().zip(g.iter()).map(|(d, gv)| d * gv).sum();
        if dg >= 0.0 {
            // not a descent direction; fall back to steepest descent
            dir = g.iter().map(|v| -v).collect();
            dg = -gnorm2;
        }

        // Armijo backtracking; the very first step is scaled down when the
        // gradient is large, since H0 = I badly overshoots then.
        let mut step = if s_hist.is_empty() {
            let g1: f64 = g.iter().map(|v| v.abs()).sum();
            (1.0 / g1.max(1.0)).min(1.0)
        } else {
            1.0f64
        };
        let mut ok = false;
        let mut x_new = vec![0.0; n];
        let mut g_new = vec![0.0; n];
        let mut f_new = f;
        for _ in 0..opts.max_backtracks {
            for j in 0..n {
                x_new[j] = x[j] + step * dir[j];
            }
            f_new = objective(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= f + opts.c1 * step * dg {
                ok = true;
                break;
            }
            step *= 0.5;
        }
        iters += 1;
        if !ok {
            failed = true;
            break;
        }

        let s: Vec<f64> = (0..n).map(|j| x_new[j] - x[j]).collect();
        let y: Vec<f64> = (0..n).map(|j| g_new[j] - g[j]).collect();
        let sy: f64 = s.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            s_hist.push_back(s);
            y_hist.push_back(y);
            rho_hist.push_back(1.0 / sy);
            if s_hist.len() > opts.history {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        x = x_new.clone();
        g = g_new.clone();
        f = f_new;
        if f < best_f {
            best_f = f;
            best_x = x.clone();
        }
    }

    LbfgsOutcome {
        x: best_x,
        f: best_f,
        initial_f,
        iterations_run: iters,
        line_search_failed: failed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_iterations_returns_start() {
        let opts = LbfgsOptions {
            iterations: 0,
            ..Default::default()
        };
        let out = lbfgs(&[3.0, -2.0], &opts, |x, g| {
            g[0] = 2.0 * x[0];
            g[1] = 2.0 * x[1];
            x[0] * x[0] + x[1] * x[1]
        });
        assert_eq!(out.x, vec![3.0, -2.0]);
        assert_eq!(out.iterations_run, 0);
        assert!(!out.line_search_failed);
    }

    #[test]
    fn minimizes_quadratic() {
        let out = lbfgs(&[5.0, -7.0, 2.0], &LbfgsOptions::default(), |x, g| {
            let mut f = 0.0;
            for (i, (xv, gv)) in x.iter().zip(g.iter_mut()).enumerate() {
                let w = (i + 1) as f64;
                f += w * xv * xv;
                *gv = 2.0 * w * xv;
            }
            f
        });
        assert!(out.f < 1e-10, "f = {}", out.f);
        assert!(out.f <= out.initial_f);
    }

    #[test]
    fn minimizes_rosenbrock() {
        let out = lbfgs(&[-1.2, 1.0], &LbfgsOptions { iterations: 200, ..Default::default() }, |x, g| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        });
        assert!((out.x[0] - 1.0).abs() < 1e-4, "x = {:?}", out.x);
        assert!((out.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn descent_contract_always_holds() {
        // a bumpy but bounded objective: best f never exceeds the start
        let out = lbfgs(&[0.7, 0.3], &LbfgsOptions { iterations: 30, ..Default::default() }, |x, g| {
            let f = x[0].sin() * x[1].cos() + 0.1 * (x[0] * x[0] + x[1] * x[1]);
            g[0] = x[0].cos() * x[1].cos() + 0.2 * x[0];
            g[1] = -x[0].sin() * x[1].sin() + 0.2 * x[1];
            f
        });
        assert!(out.f <= out.initial_f);
    }
}
