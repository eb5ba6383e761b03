//! BFGS with Armijo backtracking.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct BfgsConfig {
    /// Stop once `|grad|_inf <= grad_tol`.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Sufficient-decrease constant.
    pub armijo_c1: f64,
    /// Step shrink factor while backtracking.
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        BfgsConfig {
            grad_tol: 1e-8,
            max_iters: 200,
            armijo_c1: 1e-4,
            backtrack: 0.5,
            max_backtracks: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_inf: f64,
    /// Accepted steps.
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// The line search found no decrease even along steepest descent.
    pub line_search_failed: bool,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`, which returns `(value, gradient)`. Evaluation errors count
/// as failed trial points; an error at `x0` is returned.
pub fn minimize<F>(mut f: F, x0: &[f64], cfg: &BfgsConfig) -> Result<BfgsResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x)?;
    let mut evaluations = 1;
    let mut iterations = 0;
    let mut line_search_failed = false;
    if n == 0 {
        return Ok(BfgsResult {
            x,
            value: fx,
            grad_inf: 0.0,
            iterations,
            evaluations,
            converged: true,
            line_search_failed,
        });
    }
    // inverse Hessian, row-major; None means identity
    let mut h: Option<Vec<f64>> = None;
    let mut d = vec![0.0; n];
    let mut trial = vec![0.0; n];
    while iterations < cfg.max_iters && inf_norm(&g) > cfg.grad_tol {
        match &h {
            None => d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi),
            Some(hm) => {
                for r in 0..n {
                    d[r] = -dot(&hm[r * n..(r + 1) * n], &g);
                }
            }
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            h = None;
            d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
            slope = dot(&g, &d);
        }
        // first iteration has no curvature information: scale to a unit step in x
        let mut t = if h.is_none() && iterations == 0 {
            1.0 / inf_norm(&d).max(1e-300)
        } else {
            1.0
        };
        let mut accepted: Option<(f64, Vec<f64>, f64)> = None;
        for _ in 0..=cfg.max_backtracks {
            trial.iter_mut().zip(x.iter().zip(&d)).for_each(|(tr, (xi, di))| *tr = xi + t * di);
            evaluations += 1;
            if let Ok((ft, gt)) = f(&trial) {
                if ft.is_finite() && ft <= fx + cfg.armijo_c1 * t * slope {
                    accepted = Some((ft, gt, t));
                    break;
                }
            }
            t *= cfg.backtrack;
        }
        let Some((f_new, g_new, t_acc)) = accepted else {
            if h.is_some() {
                h = None;
                continue;
            }
            line_search_failed = true;
            break;
        };
        let s: Vec<f64> = d.iter().map(|di| t_acc * di).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        x.iter_mut().zip(&s).for_each(|(xi, si)| *xi += si);
        fx = f_new;
        g = g_new;
        iterations += 1;
        let sy = dot(&s, &y);
        if sy > 0.0 {
            let hm = h.get_or_insert_with(|| {
                let gamma = sy / dot(&y, &y);
                let mut id = vec![0.0; n * n];
                for k in 0..n {
                    id[k * n + k] = gamma;
                }
                id
            });
            update_inverse(hm, &s, &y, sy, n);
        }
    }
    Ok(BfgsResult {
        grad_inf: inf_norm(&g),
        converged: inf_norm(&g) <= cfg.grad_tol,
        x,
        value: fx,
        iterations,
        evaluations,
        line_search_failed,
    })
}

/// `H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T`.
fn update_inverse(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, n: usize) {
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|r| dot(&h[r * n..(r + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    let coef = rho * rho * yhy + rho;
    for r in 0..n {
        for c in 0..n {
            h[r * n + c] += coef * s[r] * s[c] - rho * (hy[r] * s[c] + s[r] * hy[c]);
        }
    }
}
