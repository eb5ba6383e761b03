//! Linearly implicit upwind scheme. Each step solves a cyclic lower-bidiagonal system.

use alloc::vec;
use alloc::vec::Vec;

use crate::basis::Dictionary;
use crate::control::ControlField;
use crate::error::{Error, Result};
use crate::scheme::{Setup, Trajectory};

const PIVOT_TOL: f64 = 1e-14;

/// Solves `diag_j x_j - off_{j-1} x_{j-1} = b_j` (indices cyclic) in place.
pub(crate) fn solve_cyclic_lower(diag: &[f64], off: &[f64], b: &mut [f64], step: usize) -> Result<()> {
    let n = b.len();
    // x_j = p_j + q_j x_{n-1}
    let mut q = vec![0.0; n];
    for j in 0..n {
        if diag[j].abs() <= PIVOT_TOL {
            return Err(Error::SingularStep { step });
        }
        let (p_prev, q_prev) = if j == 0 { (0.0, 1.0) } else { (b[j - 1], q[j - 1]) };
        let k = if j == 0 { n - 1 } else { j - 1 };
        b[j] = (b[j] + off[k] * p_prev) / diag[j];
        q[j] = off[k] * q_prev / diag[j];
    }
    let denom = 1.0 - q[n - 1];
    if denom.abs() <= PIVOT_TOL {
        return Err(Error::SingularStep { step });
    }
    let last = b[n - 1] / denom;
    for j in 0..n {
        b[j] += q[j] * last;
    }
    Ok(())
}

/// Solves the transpose, `diag_j y_j - off_j y_{j+1} = b_j`, in place.
pub(crate) fn solve_cyclic_lower_transposed(
    diag: &[f64],
    off: &[f64],
    b: &mut [f64],
    step: usize,
) -> Result<()> {
    let n = b.len();
    // y_j = p_j + q_j y_0, from the top down
    let mut q = vec![0.0; n];
    for j in (0..n).rev() {
        if diag[j].abs() <= PIVOT_TOL {
            return Err(Error::SingularStep { step });
        }
        let (p_next, q_next) = if j == n - 1 { (0.0, 1.0) } else { (b[j + 1], q[j + 1]) };
        b[j] = (b[j] + off[j] * p_next) / diag[j];
        q[j] = off[j] * q_next / diag[j];
    }
    let denom = 1.0 - q[0];
    if denom.abs() <= PIVOT_TOL {
        return Err(Error::SingularStep { step });
    }
    let first = b[0] / denom;
    for j in 0..n {
        b[j] += q[j] * first;
    }
    Ok(())
}

/// Per-cell `(1 + r a_j, r a_j)` with `a = F'(u)`.
pub(crate) fn coefficients(setup: &Setup, dict: &Dictionary, u: &[f64], diag: &mut Vec<f64>, off: &mut Vec<f64>) {
    let r = setup.dt() / setup.dx();
    off.clear();
    off.extend(u.iter().map(|&v| r * dict.eval_scalar(v).df));
    diag.clear();
    diag.extend(off.iter().map(|o| 1.0 + o));
}

pub(crate) fn run(
    setup: &Setup,
    dict: &Dictionary,
    control: &ControlField,
    start: &[f64],
    first: usize,
    count: usize,
) -> Result<Trajectory> {
    let nc = start.len();
    let dt = setup.dt();
    let mut states = vec![0.0; (count + 1) * nc];
    states[..nc].copy_from_slice(start);
    let (mut diag, mut off) = (Vec::with_capacity(nc), Vec::with_capacity(nc));
    for k in 0..count {
        let (done, rest) = states.split_at_mut((k + 1) * nc);
        let cur = &done[k * nc..];
        let next = &mut rest[..nc];
        coefficients(setup, dict, cur, &mut diag, &mut off);
        for j in 0..nc {
            next[j] = cur[j] + dt * setup.source(control, first + k, j);
        }
        solve_cyclic_lower(&diag, &off, next, first + k)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step: first + k });
        }
    }
    Ok(Trajectory {
        states,
        cells: nc,
        max_courant: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dense(diag: &[f64], off: &[f64]) -> Vec<Vec<f64>> {
        let n = diag.len();
        let mut a = vec![vec![0.0; n]; n];
        for j in 0..n {
            a[j][j] = diag[j];
            a[j][(j + n - 1) % n] -= off[(j + n - 1) % n];
        }
        a
    }

    #[test]
    fn cyclic_solves_match_dense_products() {
        let diag = [1.5, 1.2, 1.9, 1.1, 1.4];
        let off = [0.5, 0.2, 0.9, 0.1, 0.4];
        let b = [1.0, -2.0, 0.5, 3.0, 0.25];
        let a = dense(&diag, &off);
        let mut x = b;
        solve_cyclic_lower(&diag, &off, &mut x, 0).unwrap();
        for r in 0..5 {
            let ax: f64 = (0..5).map(|c| a[r][c] * x[c]).sum();
            assert_relative_eq!(ax, b[r], epsilon = 1e-13);
        }
        let mut y = b;
        solve_cyclic_lower_transposed(&diag, &off, &mut y, 0).unwrap();
        for c in 0..5 {
            let aty: f64 = (0..5).map(|r| a[r][c] * y[r]).sum();
            assert_relative_eq!(aty, b[c], epsilon = 1e-13);
        }
    }

    #[test]
    fn singular_system_is_reported() {
        // a_j = -1/r makes every diagonal vanish
        let mut b = [1.0, 1.0];
        assert_eq!(
            solve_cyclic_lower(&[0.0, 0.0], &[-1.0, -1.0], &mut b, 7),
            Err(Error::SingularStep { step: 7 })
        );
    }
}
