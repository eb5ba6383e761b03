//! Reverse sweep over a sequence of time steps.
//!
//! A scheme advancing `x_t -> x_{t+1}` is described by its step residual
//! `F_{t+1}(x_t, x_{t+1}, p) = 0`. Given the partial derivatives of the
//! objective, one backward pass yields `d xi / d p` for every parameter at a
//! cost independent of the parameter count.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Per-step partials of a time-marching residual, exposed as transposed products.
pub trait StepResidual {
    /// Number of steps `T`; states run `x_0 ..= x_T`.
    fn num_steps(&self) -> usize;

    fn state_dim(&self) -> usize;

    fn param_dim(&self) -> usize;

    /// Solves `(dF_{t+1}/dx_{t+1})^T mu = rhs` in place for `step = t`.
    fn solve_transposed(&self, step: usize, rhs: &mut [f64]) -> Result<()>;

    /// Accumulates `d_prev += (dF_{t+1}/dx_t)^T mu` and `d_param += (dF_{t+1}/dp)^T mu`.
    fn transpose_apply(
        &self,
        step: usize,
        mu: &[f64],
        d_prev: &mut [f64],
        d_param: &mut [f64],
    ) -> Result<()>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepAdjoint {
    /// Total derivative `d xi / d p`.
    pub d_params: Vec<f64>,
    /// Adjoint of the initial state, `d xi / d x_0`.
    pub d_initial: Vec<f64>,
    /// Steps swept (always `num_steps`).
    pub steps_swept: usize,
}

/// Backward sweep: `lambda_T = dxi/dx_T`, then for `t = T-1 .. 0`
/// `mu = (dF/dx_{t+1})^-T lambda_{t+1}`, `lambda_t = dxi/dx_t - (dF/dx_t)^T mu`,
/// `dxi/dp -= (dF/dp)^T mu`.
///
/// `state_seed(t, buf)` must add `d xi / d x_t` into `buf` (it may leave it
/// untouched when the objective does not see `x_t`).
pub fn timestep_adjoint<R, S>(residual: &R, mut state_seed: S, param_seed: &[f64]) -> Result<StepAdjoint>
where
    R: StepResidual + ?Sized,
    S: FnMut(usize, &mut [f64]),
{
    let n = residual.state_dim();
    let p = residual.param_dim();
    if param_seed.len() != p {
        return Err(Error::shape(
            alloc::format!("{p} parameter seeds"),
            alloc::format!("{}", param_seed.len()),
        ));
    }
    let steps = residual.num_steps();
    let mut lambda = vec![0.0; n];
    state_seed(steps, &mut lambda);
    let mut d_params = param_seed.to_vec();
    let mut scratch_prev = vec![0.0; n];
    let mut scratch_param = vec![0.0; p];
    for t in (0..steps).rev() {
        residual.solve_transposed(t, &mut lambda).map_err(|e| match e {
            Error::SingularStep { .. } => Error::SingularStep { step: t },
            other => other,
        })?;
        scratch_prev.iter_mut().for_each(|v| *v = 0.0);
        scratch_param.iter_mut().for_each(|v| *v = 0.0);
        residual.transpose_apply(t, &lambda, &mut scratch_prev, &mut scratch_param)?;
        for (d, s) in d_params.iter_mut().zip(&scratch_param) {
            *d -= s;
        }
        lambda.iter_mut().for_each(|v| *v = 0.0);
        state_seed(t, &mut lambda);
        for (l, s) in lambda.iter_mut().zip(&scratch_prev) {
            *l -= s;
        }
    }
    Ok(StepAdjoint {
        d_params,
        d_initial: lambda,
        steps_swept: steps,
    })
}

/// Dense per-step Jacobians, row-major. Suited to small systems and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSteps {
    n: usize,
    p: usize,
    /// `(dF/dx_t, dF/dx_{t+1}, dF/dp)` per step, sizes `n*n`, `n*n`, `n*p`.
    steps: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>,
}

impl DenseSteps {
    pub fn new(n: usize, p: usize) -> Self {
        DenseSteps {
            n,
            p,
            steps: Vec::new(),
        }
    }

    pub fn push_step(&mut self, d_prev: Vec<f64>, d_next: Vec<f64>, d_param: Vec<f64>) -> Result<()> {
        let (n, p) = (self.n, self.p);
        if d_prev.len() != n * n || d_next.len() != n * n || d_param.len() != n * p {
            return Err(Error::shape(
                alloc::format!("{}, {}, {}", n * n, n * n, n * p),
                alloc::format!("{}, {}, {}", d_prev.len(), d_next.len(), d_param.len()),
            ));
        }
        self.steps.push((d_prev, d_next, d_param));
        Ok(())
    }
}

impl StepResidual for DenseSteps {
    fn num_steps(&self) -> usize {
        self.steps.len()
    }

    fn state_dim(&self) -> usize {
        self.n
    }

    fn param_dim(&self) -> usize {
        self.p
    }

    fn solve_transposed(&self, step: usize, rhs: &mut [f64]) -> Result<()> {
        let n = self.n;
        // transpose into a working copy, then Gaussian elimination with partial pivoting
        let a = &self.steps[step].1;
        let mut m: Vec<f64> = (0..n * n).map(|k| a[(k % n) * n + k / n]).collect();
        let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1.0);
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&r, &s| m[r * n + col].abs().total_cmp(&m[s * n + col].abs()))
                .unwrap_or(col);
            if m[piv * n + col].abs() <= 1e-14 * scale {
                return Err(Error::SingularStep { step });
            }
            if piv != col {
                for k in 0..n {
                    m.swap(col * n + k, piv * n + k);
                }
                rhs.swap(col, piv);
            }
            for r in col + 1..n {
                let f = m[r * n + col] / m[col * n + col];
                if f != 0.0 {
                    for k in col..n {
                        m[r * n + k] -= f * m[col * n + k];
                    }
                    rhs[r] -= f * rhs[col];
                }
            }
        }
        for r in (0..n).rev() {
            let mut s = rhs[r];
            for k in r + 1..n {
                s -= m[r * n + k] * rhs[k];
            }
            rhs[r] = s / m[r * n + r];
        }
        Ok(())
    }

    fn transpose_apply(
        &self,
        step: usize,
        mu: &[f64],
        d_prev: &mut [f64],
        d_param: &mut [f64],
    ) -> Result<()> {
        let (n, p) = (self.n, self.p);
        let (a_prev, _, a_param) = &self.steps[step];
        for r in 0..n {
            for c in 0..n {
                d_prev[c] += a_prev[r * n + c] * mu[r];
            }
            for c in 0..p {
                d_param[c] += a_param[r * p + c] * mu[r];
            }
        }
        Ok(())
    }
}
